#include "dtc/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dtc {

Trajectory::Trajectory(Eigen::MatrixXd data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1)
        throw std::invalid_argument("Trajectory: need at least one channel and one sample");
    if (!data_.allFinite())
        throw std::invalid_argument("Trajectory: non-finite entry");
}

Trajectory Trajectory::scalar(const Eigen::VectorXd& samples) {
    return Trajectory(samples.transpose());
}

Eigen::VectorXd Trajectory::sample(Eigen::Index t) const {
    if (t < 0 || t >= length()) throw std::out_of_range("Trajectory::sample: index out of range");
    return data_.col(t);
}

Eigen::VectorXd Trajectory::vectorized() const {
    // Column-major reshape gives exactly col(w(0),...,w(T-1)).
    return Eigen::Map<const Eigen::VectorXd>(data_.data(), data_.size());
}

Trajectory Trajectory::from_vectorized(const Eigen::VectorXd& v, Eigen::Index channels) {
    if (channels < 1 || v.size() % channels != 0)
        throw std::invalid_argument("from_vectorized: size not a multiple of channel count");
    Eigen::Index T = v.size() / channels;
    return Trajectory(Eigen::Map<const Eigen::MatrixXd>(v.data(), channels, T));
}

Trajectory Trajectory::stack(const Trajectory& a, const Trajectory& b) {
    if (a.length() != b.length())
        throw std::invalid_argument("Trajectory::stack: length mismatch");
    Eigen::MatrixXd m(a.channels() + b.channels(), a.length());
    m.topRows(a.channels()) = a.data();
    m.bottomRows(b.channels()) = b.data();
    return Trajectory(std::move(m));
}

void Trajectory::to_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "t";
    for (Eigen::Index c = 0; c < channels(); ++c) f << ",ch" << c;
    f << "\n";
    f.precision(17);
    for (Eigen::Index t = 0; t < length(); ++t) {
        f << t;
        for (Eigen::Index c = 0; c < channels(); ++c) f << "," << data_(c, t);
        f << "\n";
    }
}

Trajectory Trajectory::from_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty trajectory file: " + path);
    Eigen::Index q = -1;  // channel count from header
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) ++q;
    }
    if (q < 1) throw std::runtime_error("trajectory header has no channels: " + path);
    std::vector<Eigen::VectorXd> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');  // t index, implicit by row order
        Eigen::VectorXd row(q);
        for (Eigen::Index c = 0; c < q; ++c) {
            if (!std::getline(ss, tok, ','))
                throw std::runtime_error("short row in trajectory file: " + path);
            row(c) = std::stod(tok);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("trajectory file has no samples: " + path);
    Eigen::MatrixXd m(q, static_cast<Eigen::Index>(rows.size()));
    for (Eigen::Index t = 0; t < m.cols(); ++t) m.col(t) = rows[static_cast<size_t>(t)];
    return Trajectory(std::move(m));
}

Trajectory shift(const Trajectory& w, Eigen::Index tau) {
    if (tau < 0 || tau >= w.length())
        throw std::invalid_argument("shift: tau out of range");
    return Trajectory(w.data().rightCols(w.length() - tau));
}

}  // namespace dtc
