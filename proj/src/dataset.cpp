#include "dnnmg/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dnnmg/config.hpp"

namespace dnnmg {

namespace fs = std::filesystem;

namespace {

std::string patch_file(const std::string& dir, int p) {
  char name[32];
  std::snprintf(name, sizeof(name), "patch_%06d.bin", p);
  return dir + "/" + name;
}

}  // namespace

DatasetWriter::DatasetWriter(std::string dir, DatasetMeta meta)
    : dir_(std::move(dir)), meta_(std::move(meta)) {
  if (meta_.n_patches <= 0 || meta_.feature_len <= 0 || meta_.target_len <= 0)
    throw std::invalid_argument("dataset writer: meta must declare patches and record layout");
  buf_.resize(meta_.n_patches);
  size_t rec = meta_.feature_len + meta_.target_len;
  for (auto& b : buf_) b.reserve(rec * (meta_.n_steps > 0 ? meta_.n_steps : 256));
  meta_.n_steps = 0;
}

void DatasetWriter::record_step(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets) {
  if (features.rows() != meta_.feature_len || targets.rows() != meta_.target_len ||
      features.cols() != meta_.n_patches || targets.cols() != meta_.n_patches)
    throw std::invalid_argument("dataset writer: record shape mismatch");
  for (int p = 0; p < meta_.n_patches; ++p) {
    auto& b = buf_[p];
    b.insert(b.end(), features.col(p).data(), features.col(p).data() + meta_.feature_len);
    b.insert(b.end(), targets.col(p).data(), targets.col(p).data() + meta_.target_len);
  }
  ++meta_.n_steps;
}

void DatasetWriter::finalize() {
  if (finalized_) return;
  fs::create_directories(dir_);
  KvConfig man;
  man.set("mode", meta_.mode);
  man.set("n_patches", std::to_string(meta_.n_patches));
  man.set("n_steps", std::to_string(meta_.n_steps));
  man.set("feature_len", std::to_string(meta_.feature_len));
  man.set("target_len", std::to_string(meta_.target_len));
  man.set("record_len", std::to_string(meta_.feature_len + meta_.target_len));
  man.set("patch_file", "patch_%06d.bin");
  man.set("layout", "per patch: n_steps records of record_len little-endian float64, "
                    "record = [features | target]");
  for (const auto& kv : meta_.extra) man.set(kv.first, kv.second);
  man.write(dir_ + "/manifest.txt");

  for (int p = 0; p < meta_.n_patches; ++p) {
    std::ofstream f(patch_file(dir_, p), std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + patch_file(dir_, p));
    f.write((const char*)buf_[p].data(), buf_[p].size() * sizeof(double));
    if (!f) throw std::runtime_error("short write on " + patch_file(dir_, p));
  }
  finalized_ = true;
}

DatasetReader::DatasetReader(const std::string& dir) {
  KvConfig man = KvConfig::from_file(dir + "/manifest.txt");
  meta_.mode = man.require("mode");
  meta_.n_patches = man.get_int("n_patches", 0);
  meta_.n_steps = man.get_int("n_steps", 0);
  meta_.feature_len = man.get_int("feature_len", 0);
  meta_.target_len = man.get_int("target_len", 0);
  for (const auto& kv : man.items()) meta_.extra[kv.first] = kv.second;
  if (meta_.n_patches <= 0 || meta_.n_steps <= 0)
    throw std::runtime_error("dataset " + dir + ": empty or malformed manifest");

  size_t rec = meta_.feature_len + meta_.target_len;
  feat_.assign(meta_.n_steps, Eigen::MatrixXd(meta_.feature_len, meta_.n_patches));
  targ_.assign(meta_.n_steps, Eigen::MatrixXd(meta_.target_len, meta_.n_patches));
  std::vector<double> one(rec * meta_.n_steps);
  for (int p = 0; p < meta_.n_patches; ++p) {
    std::ifstream f(patch_file(dir, p), std::ios::binary);
    if (!f) throw std::runtime_error("dataset " + dir + ": missing patch file " +
                                     std::to_string(p));
    f.read((char*)one.data(), one.size() * sizeof(double));
    if (!f || f.gcount() != (std::streamsize)(one.size() * sizeof(double)))
      throw std::runtime_error("dataset " + dir + ": truncated patch file " + std::to_string(p));
    for (int s = 0; s < meta_.n_steps; ++s) {
      const double* r = one.data() + s * rec;
      for (int i = 0; i < meta_.feature_len; ++i) feat_[s](i, p) = r[i];
      for (int i = 0; i < meta_.target_len; ++i) targ_[s](i, p) = r[meta_.feature_len + i];
    }
  }
}

}  // namespace dnnmg
