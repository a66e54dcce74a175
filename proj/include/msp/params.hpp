#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "msp/numeric.hpp"

namespace msp {

/// One named matrix or bias inside the flat parameter vector. Stored column-major.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
};

/// Ordered, disjoint cover of [0, q) by named blocks.
class ParamLayout {
 public:
  /// Appends a block; names must be unique.
  ParamBlock add(const std::string& name, std::size_t rows, std::size_t cols = 1);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return size_; }

  /// Stable 64-bit FNV-1a hash of block names and shapes, used to match checkpoints to configs.
  std::uint64_t hash() const;

  /// True iff blocks are disjoint, ordered, and exactly cover [0, size()).
  bool is_exact_cover() const;

 private:
  std::vector<ParamBlock> blocks_;
  std::map<std::string, std::size_t> index_;
  std::size_t size_ = 0;
};

/// The flat weight vector theta together with its layout.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout);
  ParamVector(ParamLayout layout, Vec values);

  const ParamLayout& layout() const { return layout_; }
  const Vec& values() const { return values_; }
  Vec& values() { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  Eigen::Map<const Mat> view(const ParamBlock& b) const;
  Eigen::Map<Mat> view(const ParamBlock& b);
  Mat get(const std::string& name) const { return view(layout_.block(name)); }
  void set(const std::string& name, const Mat& m);

  /// Splits theta into one matrix per block.
  std::map<std::string, Mat> unpack() const;
  /// Inverse of unpack; every layout block must be present with matching shape.
  static ParamVector pack(const ParamLayout& layout, const std::map<std::string, Mat>& blocks);

 private:
  ParamLayout layout_;
  Vec values_;
};

}  // namespace msp
