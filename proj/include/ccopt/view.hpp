#pragma once

#include <vector>

#include "ccopt/types.hpp"

namespace ccopt {

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = int(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Per-rank local shape of a value with the given global shape and layout on a
// group of `world` ranks. Sliced tensors store only their slice.
inline Shape local_shape(const Shape& global, const Layout& l, int world) {
  Shape s = global;
  if (l.is_sliced()) {
    if (s[l.dim] % world != 0)
      throw Error(ErrCode::DivisibilityError,
                  "extent " + std::to_string(s[l.dim]) + " over " + std::to_string(world) + " ranks");
    s[l.dim] /= world;
  }
  return s;
}

// Maps between global flat indices and (owner rank, local flat index) for a
// value sliced along one axis. For Replicated/Local values the mapping is the
// identity and every rank owns every element.
struct DistView {
  Shape global;
  Layout layout;
  int world = 1;
  std::vector<int64_t> gstrides;
  int64_t per_rank_extent = 0;  // slice extent along the sliced axis

  DistView() = default;
  DistView(Shape g, Layout l, int w) : global(std::move(g)), layout(l), world(w) {
    gstrides = row_major_strides(global);
    if (layout.is_sliced()) per_rank_extent = global[layout.dim] / world;
  }

  int64_t local_elems() const { return num_elems(local_shape(global, layout, world)); }

  int owner(int64_t gidx) const {
    if (!layout.is_sliced()) return -1;  // every rank
    int64_t c = (gidx / gstrides[layout.dim]) % global[layout.dim];
    return int(c / per_rank_extent);
  }

  int64_t to_local(int64_t gidx) const {
    if (!layout.is_sliced()) return gidx;
    int d = layout.dim;
    int64_t before = gidx / (gstrides[d] * global[d]);
    int64_t c = (gidx / gstrides[d]) % global[d];
    int64_t after = gidx % gstrides[d];
    int64_t lc = c % per_rank_extent;
    return (before * per_rank_extent + lc) * gstrides[d] + after;
  }

  int64_t to_global(int rank, int64_t lidx) const {
    if (!layout.is_sliced()) return lidx;
    int d = layout.dim;
    int64_t before = lidx / (gstrides[d] * per_rank_extent);
    int64_t lc = (lidx / gstrides[d]) % per_rank_extent;
    int64_t after = lidx % gstrides[d];
    int64_t c = int64_t(rank) * per_rank_extent + lc;
    return (before * global[d] + c) * gstrides[d] + after;
  }
};

// Flat index into an operand of shape `in` for a position in the broadcast
// output shape `out` (trailing axes aligned, extent-1 axes stretched).
struct BroadcastView {
  std::vector<int64_t> out_strides;
  std::vector<int64_t> in_strides;  // 0 on broadcast axes
  Shape out_shape;

  BroadcastView() = default;
  BroadcastView(const Shape& out, const Shape& in) : out_shape(out) {
    out_strides = row_major_strides(out);
    std::vector<int64_t> ist = row_major_strides(in);
    in_strides.assign(out.size(), 0);
    size_t off = out.size() - in.size();
    for (size_t i = 0; i < in.size(); ++i)
      in_strides[off + i] = in[i] == 1 && out[off + i] != 1 ? 0 : ist[i];
  }

  int64_t map(int64_t out_flat) const {
    int64_t in_flat = 0;
    for (size_t i = 0; i < out_shape.size(); ++i) {
      int64_t c = (out_flat / out_strides[i]) % out_shape[i];
      in_flat += c * in_strides[i];
    }
    return in_flat;
  }
};

}  // namespace ccopt
