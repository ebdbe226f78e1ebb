#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ocpg {

/// A named contiguous range of the flat parameter vector.
struct Slice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Dense gradient over every parameter index, tagged with the estimator or
/// theorem that produced it.
struct GradientVector {
  std::vector<double> values;
  std::string label;

  GradientVector() = default;
  explicit GradientVector(std::size_t n, std::string lbl = {})
      : values(n, 0.0), label(std::move(lbl)) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  GradientVector& operator+=(const GradientVector& other);
  GradientVector& operator*=(double c);

  double norm_inf() const;
  double norm2() const;
  bool all_finite() const;
};

GradientVector operator+(GradientVector a, const GradientVector& b);
GradientVector operator-(GradientVector a, const GradientVector& b);
double dot(std::span<const double> a, std::span<const double> b);

/// Flat vector of all trainable parameters plus a layout naming the ranges
/// each architecture component reads. Slices of different components may
/// overlap (a shared trunk is referenced by every head) or be disjoint.
class ParameterStore {
 public:
  ParameterStore() = default;

  /// Appends a fresh zero-initialised slice and returns its offset.
  std::size_t allocate(std::string name, std::size_t size);

  /// Declares that component `component` reads slice `slice_name`. A
  /// component may read several slices; a slice may be read by several
  /// components.
  void attach(std::string component, const std::string& slice_name);

  std::size_t size() const { return theta_.size(); }
  std::span<double> theta() { return theta_; }
  std::span<const double> theta() const { return theta_; }
  double& operator[](std::size_t i) { return theta_[i]; }
  double operator[](std::size_t i) const { return theta_[i]; }

  const std::vector<Slice>& slices() const { return slices_; }
  const Slice& slice(std::string_view name) const;
  bool has_slice(std::string_view name) const;

  /// Sorted, de-duplicated parameter indices read by a component.
  std::vector<std::size_t> support(std::string_view component) const;
  std::vector<std::string> components() const;

  /// Throws if any slice falls outside theta.
  void validate() const;

 private:
  struct Attachment {
    std::string component;
    std::string slice;
  };
  std::vector<double> theta_;
  std::vector<Slice> slices_;
  std::vector<Attachment> attachments_;
};

}  // namespace ocpg
