#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace dnnmg {

struct DatasetMeta {
  std::string mode;  // "velocity" or "psi"
  int n_patches = 0, n_steps = 0, feature_len = 0, target_len = 0;
  std::map<std::string, std::string> extra;  // provenance, copied to the manifest
};

// One file per patch (patch_%06d.bin): n_steps records of little-endian f64,
// record = [features | target].  manifest.txt documents layout and provenance.
// Records are buffered in memory and written on finalize.
class DatasetWriter {
 public:
  DatasetWriter(std::string dir, DatasetMeta meta);
  // columns = patches, in patch enumeration order
  void record_step(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets);
  void finalize();

 private:
  std::string dir_;
  DatasetMeta meta_;
  std::vector<std::vector<double>> buf_;
  bool finalized_ = false;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& dir);
  const DatasetMeta& meta() const { return meta_; }
  // step-major: feature_len x n_patches and target_len x n_patches
  const Eigen::MatrixXd& features(int step) const { return feat_.at(step); }
  const Eigen::MatrixXd& targets(int step) const { return targ_.at(step); }

 private:
  DatasetMeta meta_;
  std::vector<Eigen::MatrixXd> feat_, targ_;
};

}  // namespace dnnmg
