#include "msp/params.hpp"

namespace msp {

ParamBlock ParamLayout::add(const std::string& name, std::size_t rows, std::size_t cols) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter block '" + name + "'");
  if (rows == 0 || cols == 0) throw DimensionError("empty parameter block '" + name + "'");
  ParamBlock b{name, size_, rows, cols};
  index_[name] = blocks_.size();
  blocks_.push_back(b);
  size_ += b.size();
  return b;
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter block '" + name + "'");
  return blocks_[it->second];
}

std::uint64_t ParamLayout::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& b : blocks_) {
    mix(b.name);
    mix(":" + std::to_string(b.rows) + "x" + std::to_string(b.cols) + ";");
  }
  return h;
}

bool ParamLayout::is_exact_cover() const {
  std::size_t next = 0;
  for (const auto& b : blocks_) {
    if (b.offset != next) return false;
    next += b.size();
  }
  return next == size_;
}

ParamVector::ParamVector(ParamLayout layout)
    : layout_(std::move(layout)), values_(Vec::Zero(static_cast<Eigen::Index>(layout_.size()))) {}

ParamVector::ParamVector(ParamLayout layout, Vec values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.size()) != layout_.size()) {
    throw DimensionError("theta has " + std::to_string(values_.size()) + " entries, layout needs " +
                         std::to_string(layout_.size()));
  }
}

Eigen::Map<const Mat> ParamVector::view(const ParamBlock& b) const {
  return {values_.data() + b.offset, static_cast<Eigen::Index>(b.rows),
          static_cast<Eigen::Index>(b.cols)};
}

Eigen::Map<Mat> ParamVector::view(const ParamBlock& b) {
  return {values_.data() + b.offset, static_cast<Eigen::Index>(b.rows),
          static_cast<Eigen::Index>(b.cols)};
}

void ParamVector::set(const std::string& name, const Mat& m) {
  const auto& b = layout_.block(name);
  if (static_cast<std::size_t>(m.rows()) != b.rows || static_cast<std::size_t>(m.cols()) != b.cols) {
    throw DimensionError("block '" + name + "' is " + std::to_string(b.rows) + "x" +
                         std::to_string(b.cols) + ", got " + shape_string(m));
  }
  view(b) = m;
}

std::map<std::string, Mat> ParamVector::unpack() const {
  std::map<std::string, Mat> out;
  for (const auto& b : layout_.blocks()) out.emplace(b.name, view(b));
  return out;
}

ParamVector ParamVector::pack(const ParamLayout& layout, const std::map<std::string, Mat>& blocks) {
  ParamVector p(layout);
  for (const auto& b : layout.blocks()) {
    auto it = blocks.find(b.name);
    if (it == blocks.end()) throw std::out_of_range("pack: missing block '" + b.name + "'");
    p.set(b.name, it->second);
  }
  return p;
}

}  // namespace msp
