#include "autodiff/parameter_store.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ocpg {

GradientVector& GradientVector::operator+=(const GradientVector& other) {
  if (other.size() != size()) {
    throw std::invalid_argument("gradient size mismatch: " + std::to_string(size()) + " vs " +
                                std::to_string(other.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
  return *this;
}

GradientVector& GradientVector::operator*=(double c) {
  for (double& v : values) v *= c;
  return *this;
}

double GradientVector::norm_inf() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

double GradientVector::norm2() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

bool GradientVector::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

GradientVector operator+(GradientVector a, const GradientVector& b) {
  a += b;
  return a;
}

GradientVector operator-(GradientVector a, const GradientVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("gradient size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.values[i] -= b.values[i];
  return a;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t ParameterStore::allocate(std::string name, std::size_t size) {
  if (has_slice(name)) throw std::invalid_argument("duplicate slice name: " + name);
  const std::size_t offset = theta_.size();
  theta_.resize(offset + size, 0.0);
  slices_.push_back(Slice{std::move(name), offset, size});
  return offset;
}

void ParameterStore::attach(std::string component, const std::string& slice_name) {
  (void)slice(slice_name);
  attachments_.push_back(Attachment{std::move(component), slice_name});
}

const Slice& ParameterStore::slice(std::string_view name) const {
  for (const auto& s : slices_) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no parameter slice named '" + std::string(name) + "'");
}

bool ParameterStore::has_slice(std::string_view name) const {
  return std::any_of(slices_.begin(), slices_.end(), [&](const Slice& s) { return s.name == name; });
}

std::vector<std::size_t> ParameterStore::support(std::string_view component) const {
  std::vector<std::size_t> idx;
  for (const auto& a : attachments_) {
    if (a.component != component) continue;
    const Slice& s = slice(a.slice);
    for (std::size_t i = 0; i < s.size; ++i) idx.push_back(s.offset + i);
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

std::vector<std::string> ParameterStore::components() const {
  std::vector<std::string> out;
  for (const auto& a : attachments_) {
    if (std::find(out.begin(), out.end(), a.component) == out.end()) out.push_back(a.component);
  }
  return out;
}

void ParameterStore::validate() const {
  for (const auto& s : slices_) {
    if (s.offset + s.size > theta_.size()) {
      throw std::out_of_range("slice '" + s.name + "' exceeds parameter vector");
    }
  }
}

}  // namespace ocpg
