#include "gsfl/centers.hpp"

#include <cmath>
#include <sstream>

namespace gsfl {

const char* to_string(DivisorMode mode) noexcept {
  return mode == DivisorMode::kClassCount ? "class_count" : "group_size";
}

DivisorMode parse_divisor_mode(const std::string& s) {
  if (s == "group_size") return DivisorMode::kGroupSize;
  if (s == "class_count") return DivisorMode::kClassCount;
  fail(ErrorKind::kUsage, "unknown divisor mode \"" + s + "\" (group_size|class_count)");
}

CenterState init_centers(std::size_t num_classes, std::size_t num_groups, std::size_t code_dim,
                         double eta) {
  if (num_classes == 0 || num_groups == 0 || code_dim == 0) {
    fail(ErrorKind::kParameter, "init_centers: dimensions must be positive");
  }
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    fail(ErrorKind::kParameter, "init_centers: eta must be finite and nonnegative");
  }
  return CenterState{Matrix(num_classes, code_dim), Matrix(num_groups, code_dim), eta};
}

CenterState update_class_centers(const CenterState& state, const Matrix& y_dis,
                                 std::span<const int> labels) {
  if (y_dis.rows() != labels.size()) {
    fail(ErrorKind::kShape, "update_class_centers: batch has " + std::to_string(y_dis.rows()) +
                                " rows but " + std::to_string(labels.size()) + " labels");
  }
  if (y_dis.rows() > 0 && y_dis.cols() != state.dim()) {
    fail(ErrorKind::kShape, "update_class_centers: code width " + std::to_string(y_dis.cols()) +
                                ", centers have " + std::to_string(state.dim()));
  }
  if (!all_finite(y_dis.flat())) fail(ErrorKind::kData, "update_class_centers: non-finite y_dis");

  const std::size_t C = state.num_classes();
  const std::size_t d = state.dim();
  Matrix diff_sum(C, d);
  std::vector<std::size_t> count(C, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 1 || static_cast<std::size_t>(l) > C) {
      fail(ErrorKind::kData, "update_class_centers: label " + std::to_string(l) + " out of range");
    }
    const auto c = static_cast<std::size_t>(l - 1);
    ++count[c];
    auto acc = diff_sum.row(c);
    const auto y = y_dis.row(i);
    const auto m = state.m.row(c);
    for (std::size_t k = 0; k < d; ++k) acc[k] += m[k] - y[k];
  }
  CenterState next = state;
  for (std::size_t c = 0; c < C; ++c) {
    if (count[c] == 0) continue;
    const double denom = 1.0 + static_cast<double>(count[c]);
    auto m = next.m.row(c);
    const auto acc = diff_sum.row(c);
    for (std::size_t k = 0; k < d; ++k) m[k] -= state.eta * (acc[k] / denom);
  }
  return next;
}

CenterState update_shared_centers(const CenterState& state, const GroupAssignment& groups,
                                  DivisorMode mode) {
  if (groups.num_classes() != state.num_classes()) {
    fail(ErrorKind::kConfig, "update_shared_centers: grouping covers " +
                                 std::to_string(groups.num_classes()) + " classes, centers have " +
                                 std::to_string(state.num_classes()));
  }
  if (groups.num_groups != state.num_groups()) {
    fail(ErrorKind::kConfig, "update_shared_centers: grouping has " +
                                 std::to_string(groups.num_groups) + " groups, centers have " +
                                 std::to_string(state.num_groups()));
  }
  CenterState next = state;
  const std::size_t d = state.dim();
  const auto members = groups.members();
  for (std::size_t j = 0; j < members.size(); ++j) {
    if (members[j].empty()) continue;
    std::vector<double> sum(d, 0.0);
    for (int c : members[j]) {
      const auto m = state.m.row(static_cast<std::size_t>(c - 1));
      for (std::size_t k = 0; k < d; ++k) sum[k] += m[k];
    }
    const double divisor = mode == DivisorMode::kClassCount
                               ? static_cast<double>(state.num_classes())
                               : static_cast<double>(members[j].size());
    auto s = next.s.row(j);
    for (std::size_t k = 0; k < d; ++k) s[k] = sum[k] / divisor;
  }
  return next;
}

void write_centers(binio::Writer& w, const CenterState& state) {
  w.u32(static_cast<std::uint32_t>(state.m.rows()));
  w.u32(static_cast<std::uint32_t>(state.s.rows()));
  w.u32(static_cast<std::uint32_t>(state.m.cols()));
  w.f64(state.eta);
  w.f64s(state.m.flat());
  w.f64s(state.s.flat());
}

CenterState read_centers(binio::Reader& r) {
  const std::uint32_t C = r.u32();
  const std::uint32_t G = r.u32();
  const std::uint32_t d = r.u32();
  CenterState st;
  st.eta = r.f64();
  r.need((std::size_t{C} + G) * d * 8, "center payload");
  st.m = Matrix(C, d);
  st.s = Matrix(G, d);
  r.f64s(st.m.flat());
  r.f64s(st.s.flat());
  return st;
}

std::string centers_to_csv(const CenterState& state) {
  std::ostringstream out;
  out.precision(17);
  auto emit = [&](char kind, const Matrix& mat) {
    for (std::size_t i = 0; i < mat.rows(); ++i) {
      out << kind << "," << (i + 1);
      for (double v : mat.row(i)) out << "," << v;
      out << "\n";
    }
  };
  emit('m', state.m);
  emit('s', state.s);
  return out.str();
}

}  // namespace gsfl
