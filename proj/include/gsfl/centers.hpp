#pragma once

// Class-specific centers m_c and group shared centers s_j, maintained by
// explicit mini-batch update rules rather than by gradient descent.

#include <cstdint>
#include <span>
#include <string>

#include "gsfl/binio.hpp"
#include "gsfl/common.hpp"
#include "gsfl/grouping.hpp"

namespace gsfl {

// kClassCount divides the sum of member centers by C; kGroupSize by |I_j|.
enum class DivisorMode : std::uint8_t { kGroupSize = 0, kClassCount = 1 };

const char* to_string(DivisorMode mode) noexcept;
DivisorMode parse_divisor_mode(const std::string& s);

struct CenterState {
  Matrix m;          // C x d_f
  Matrix s;          // N_g x d_f
  double eta = 0.0;  // center learning rate

  std::size_t num_classes() const noexcept { return m.rows(); }
  std::size_t num_groups() const noexcept { return s.rows(); }
  std::size_t dim() const noexcept { return m.cols(); }

  bool operator==(const CenterState&) const = default;
};

CenterState init_centers(std::size_t num_classes, std::size_t num_groups, std::size_t code_dim,
                         double eta);

// For each class c present in the batch:
//   delta_c = sum_i [l_i = c] (m_c - y_dis_i) / (1 + sum_i [l_i = c])
//   m_c    <- m_c - eta * delta_c
// Classes absent from the batch are left untouched.
CenterState update_class_centers(const CenterState& state, const Matrix& y_dis,
                                 std::span<const int> labels);

// s_j = sum_{c in I_j} m_c / D, with D per `mode`. Empty groups keep their s_j.
CenterState update_shared_centers(const CenterState& state, const GroupAssignment& groups,
                                  DivisorMode mode = DivisorMode::kGroupSize);

void write_centers(binio::Writer& w, const CenterState& state);
CenterState read_centers(binio::Reader& r);

// One row per center: kind (m|s), 1-based index, values.
std::string centers_to_csv(const CenterState& state);

}  // namespace gsfl
