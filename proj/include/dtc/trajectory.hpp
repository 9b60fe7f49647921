#pragma once

#include <Eigen/Core>
#include <string>

namespace dtc {

/// A finite multichannel signal. Sample t (0-based) is column t of `data`,
/// so the matrix is channels x length. Immutable by convention after
/// construction; all operations return new values.
class Trajectory {
public:
    Trajectory(Eigen::MatrixXd data);

    /// Single-channel convenience constructor.
    static Trajectory scalar(const Eigen::VectorXd& samples);

    Eigen::Index channels() const { return data_.rows(); }
    Eigen::Index length() const { return data_.cols(); }
    const Eigen::MatrixXd& data() const { return data_; }

    Eigen::VectorXd sample(Eigen::Index t) const;

    /// col(w(0),...,w(T-1)): channels-within-sample stacking, q*T entries.
    Eigen::VectorXd vectorized() const;
    static Trajectory from_vectorized(const Eigen::VectorXd& v, Eigen::Index channels);

    /// Channel-wise vertical concatenation of two equal-length signals.
    static Trajectory stack(const Trajectory& a, const Trajectory& b);

    void to_csv(const std::string& path) const;
    static Trajectory from_csv(const std::string& path);

private:
    Eigen::MatrixXd data_;
};

/// result(t) = w(t + tau); length shrinks by tau. Requires tau < length.
Trajectory shift(const Trajectory& w, Eigen::Index tau);

}  // namespace dtc
