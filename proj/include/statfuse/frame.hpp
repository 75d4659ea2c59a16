#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

namespace statfuse {

enum class Role { kRecipient, kDonor };

/// Names of the columns that make up a frame inside a CSV file. `extra` is
/// the sample-specific block: the y variables on a recipient, the z
/// variables on a donor.
struct ColumnMap {
  std::string id;
  std::vector<std::string> x;
  std::vector<std::string> extra;
  std::string weight;
};

/// Level order recorded for a one-hot expanded categorical column, so both
/// frames of a pair can share one encoding.
struct CategoricalEncoding {
  std::string column;
  std::vector<std::string> levels;  // lexicographic
};

/// One weighted survey sample, immutable after load.
///
/// Invariants: ids unique (compared after trimming surrounding whitespace),
/// weights strictly positive and finite, x complete with a fixed width p.
struct SampleFrame {
  Role role = Role::kRecipient;
  std::vector<std::string> ids;
  Eigen::MatrixXd x;        // n x p matching variables
  Eigen::MatrixXd extra;    // n x q (y block) or n x r (z block)
  Eigen::VectorXd weights;  // n initial weights v
  std::vector<std::string> x_names;
  std::vector<std::string> extra_names;  // post one-hot expansion
  std::vector<CategoricalEncoding> encodings;

  int n() const { return static_cast<int>(ids.size()); }
  int p() const { return static_cast<int>(x.cols()); }
  int extra_dim() const { return static_cast<int>(extra.cols()); }
};

/// Units present in both samples, matched by exact id equality.
struct OverlapInfo {
  std::vector<std::string> common_ids;
  std::vector<std::pair<int, int>> pairs;  // (position in S1, position in S2)

  int n12() const { return static_cast<int>(pairs.size()); }
};

SampleFrame load_frame(const std::string& path, const ColumnMap& columns, Role role);
void save_frame(const SampleFrame& frame, const std::string& path,
                const std::string& weight_name = "weight");

/// In-memory constructor used by the simulator and by tests; applies the
/// same validation as load_frame.
SampleFrame make_frame(Role role, std::vector<std::string> ids, Eigen::MatrixXd x,
                       Eigen::MatrixXd extra, Eigen::VectorXd weights,
                       std::vector<std::string> x_names = {},
                       std::vector<std::string> extra_names = {});

OverlapInfo detect_overlap(const SampleFrame& recipient, const SampleFrame& donor);

}  // namespace statfuse
