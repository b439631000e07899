#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dpuc {

// Every failure the compiler or simulator reports derives from Error so the
// CLI can map families of errors to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define DPUC_ERROR(Name)                   \
  struct Name : Error {                    \
    using Error::Error;                    \
  }

DPUC_ERROR(ParseError);
DPUC_ERROR(ShapeError);
DPUC_ERROR(FoldError);
DPUC_ERROR(CycleError);
DPUC_ERROR(InfeasibleError);
DPUC_ERROR(UnsupportedError);
DPUC_ERROR(AsmErrorBase);
DPUC_ERROR(CapacityError);
DPUC_ERROR(OutOfMemoryError);
DPUC_ERROR(UseBeforeDefError);
DPUC_ERROR(OutOfBoundsError);
DPUC_ERROR(PortConflictError);
DPUC_ERROR(EncodingError);
DPUC_ERROR(DeadlockError);
DPUC_ERROR(CompileError);
DPUC_ERROR(IoError);

#undef DPUC_ERROR

struct AsmError : AsmErrorBase {
  AsmError(int line, const std::string& what)
      : AsmErrorBase("line " + std::to_string(line) + ": " + what), line(line) {}
  int line;
};

inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }
inline int64_t round_up(int64_t a, int64_t b) { return ceil_div(a, b) * b; }

std::string base64_encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> base64_decode(std::string_view text);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);
void write_file(const std::string& path, std::string_view text);

}  // namespace dpuc
