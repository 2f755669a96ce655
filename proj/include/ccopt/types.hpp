#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccopt {

using Shape = std::vector<int64_t>;

enum class Elem { F16, F32 };

inline int byte_width(Elem e) { return e == Elem::F16 ? 2 : 4; }
inline const char* elem_name(Elem e) { return e == Elem::F16 ? "f16" : "f32"; }

enum class LayoutKind { Sliced, Replicated, Local };

struct Layout {
  LayoutKind kind = LayoutKind::Local;
  int dim = -1;  // valid iff kind == Sliced

  static Layout sliced(int d) { return {LayoutKind::Sliced, d}; }
  static Layout replicated() { return {LayoutKind::Replicated, -1}; }
  static Layout local() { return {LayoutKind::Local, -1}; }

  bool is_sliced() const { return kind == LayoutKind::Sliced; }
  bool operator==(const Layout& o) const {
    return kind == o.kind && (kind != LayoutKind::Sliced || dim == o.dim);
  }
  bool operator!=(const Layout& o) const { return !(*this == o); }

  std::string str() const {
    switch (kind) {
      case LayoutKind::Sliced: return "Sliced(" + std::to_string(dim) + ")";
      case LayoutKind::Replicated: return "Replicated";
      default: return "Local";
    }
  }
};

struct ProcessGroup {
  int group_id = 0;
  int world_size = 1;
  int first_rank = 0;  // contiguous interval [first_rank, first_rank + world_size)

  bool contains(int rank) const {
    return rank >= first_rank && rank < first_rank + world_size;
  }
};

struct TensorDecl {
  std::string name;
  Elem elem = Elem::F32;
  Shape shape;  // global shape; a Scalar has an empty shape
  Layout layout = Layout::replicated();
  int group = 0;
};

enum class Reducer { Sum, Max, Min };

inline const char* reducer_name(Reducer r) {
  switch (r) {
    case Reducer::Sum: return "sum";
    case Reducer::Max: return "max";
    default: return "min";
  }
}

inline double reduce_apply(Reducer r, double a, double b) {
  switch (r) {
    case Reducer::Sum: return a + b;
    case Reducer::Max: return a > b ? a : b;
    default: return a < b ? a : b;
  }
}

inline float reduce_apply(Reducer r, float a, float b) {
  switch (r) {
    case Reducer::Sum: return a + b;
    case Reducer::Max: return a > b ? a : b;
    default: return a < b ? a : b;
  }
}

inline int64_t num_elems(const Shape& s) {
  int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Error taxonomy shared by inference, transforms, and the runtime.
enum class ErrCode {
  LayoutMismatch,
  ShapeMismatch,
  InvalidInput,
  NotAllReduce,
  NotSliceable,
  NotAConsumer,
  DependencyViolation,
  NotComputation,
  ChainBroken,
  NotConsumer,
  NotProducerConsumerChain,
  ConsumerNotSliced,
  StillLive,
  NoSuchRank,
  OperandLayoutMismatch,
  DivisibilityError,
  ReplicationViolation,
  CandidateFailed,
  UnknownId,
  ParseError,
};

inline const char* err_name(ErrCode c) {
  switch (c) {
    case ErrCode::LayoutMismatch: return "LayoutMismatch";
    case ErrCode::ShapeMismatch: return "ShapeMismatch";
    case ErrCode::InvalidInput: return "InvalidInput";
    case ErrCode::NotAllReduce: return "NotAllReduce";
    case ErrCode::NotSliceable: return "NotSliceable";
    case ErrCode::NotAConsumer: return "NotAConsumer";
    case ErrCode::DependencyViolation: return "DependencyViolation";
    case ErrCode::NotComputation: return "NotComputation";
    case ErrCode::ChainBroken: return "ChainBroken";
    case ErrCode::NotConsumer: return "NotConsumer";
    case ErrCode::NotProducerConsumerChain: return "NotProducerConsumerChain";
    case ErrCode::ConsumerNotSliced: return "ConsumerNotSliced";
    case ErrCode::StillLive: return "StillLive";
    case ErrCode::NoSuchRank: return "NoSuchRank";
    case ErrCode::OperandLayoutMismatch: return "OperandLayoutMismatch";
    case ErrCode::DivisibilityError: return "DivisibilityError";
    case ErrCode::ReplicationViolation: return "ReplicationViolation";
    case ErrCode::CandidateFailed: return "CandidateFailed";
    case ErrCode::UnknownId: return "UnknownId";
    default: return "ParseError";
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrCode code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}
  ErrCode code() const { return code_; }

 private:
  ErrCode code_;
};

// FNV-1a, used for dropout keys and output digests.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace ccopt
