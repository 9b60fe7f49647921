#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "dtc/trajectory.hpp"

using dtc::Trajectory;

TEST_CASE("vectorization stacks channels within each sample") {
    Eigen::MatrixXd d(2, 3);
    d << 1, 2, 3, 4, 5, 6;
    Trajectory w(d);
    Eigen::VectorXd v = w.vectorized();
    REQUIRE(v.size() == 6);
    CHECK(v(0) == 1);
    CHECK(v(1) == 4);
    CHECK(v(4) == 3);
    Trajectory back = Trajectory::from_vectorized(v, 2);
    CHECK((back.data() - d).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shift drops the leading samples") {
    Eigen::MatrixXd d(1, 4);
    d << 10, 11, 12, 13;
    Trajectory s = dtc::shift(Trajectory(d), 2);
    REQUIRE(s.length() == 2);
    CHECK(s.data()(0, 0) == 12);
    CHECK_THROWS(dtc::shift(Trajectory(d), 4));
}

TEST_CASE("csv round trip preserves full double precision") {
    Eigen::MatrixXd d(2, 5);
    d.setRandom();
    d(0, 0) = 1.0 / 3.0;
    d(1, 4) = -1e-17;
    const std::string path =
        (std::filesystem::temp_directory_path() / "dtc_traj_roundtrip.csv").string();
    Trajectory(d).to_csv(path);
    Trajectory back = Trajectory::from_csv(path);
    std::remove(path.c_str());
    REQUIRE(back.channels() == 2);
    REQUIRE(back.length() == 5);
    CHECK((back.data() - d).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-finite samples are rejected") {
    Eigen::MatrixXd d(1, 2);
    d << 1.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(Trajectory{d});
}
