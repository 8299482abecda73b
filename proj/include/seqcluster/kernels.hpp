#pragma once
// Data-parallel arithmetic kernels.
//
// Every kernel has a scalar reference implementation; x86-64 builds also
// carry an AVX2+FMA variant. The active table is chosen once at startup from
// CPUID and can be pinned to the scalar reference with SEQCLUSTER_SIMD=scalar
// (or `--simd scalar` on the CLI). Both variants are deterministic, but they
// are not bit-identical to each other: the AVX2 path fuses multiply-adds and
// reassociates reductions.

#include <cstddef>
#include <string_view>

namespace seqcluster::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;

  // C[m x n] (+)= A[m x k] * B[k x n].
  // A(i, p) lives at a[i * a_row_stride + p * a_col_stride], which lets the
  // caller pass A or A^T without copying. B and C are row-major with leading
  // dimensions ldb / ldc. When accumulate is false C is overwritten.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t a_row_stride, std::size_t a_col_stride, const double* b,
               std::size_t ldb, double* c, std::size_t ldc, bool accumulate);

  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += a * b
  void (*mul_acc)(const double* a, const double* b, double* y, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // One bias-corrected Adam step over a contiguous parameter block.
  void (*adam_step)(double* w, const double* g, double* m, double* v, std::size_t n,
                    const AdamCoeffs& c);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled in.
const KernelTable* avx2_table();

bool isa_supported(Isa isa);
Isa best_supported_isa();

// Currently selected table. First call resolves SEQCLUSTER_SIMD / CPUID.
const KernelTable& active();
void select_isa(Isa isa);  // throws ConfigError if unsupported

// Upper bound on worker threads used inside gemm and pairwise-distance
// kernels. Results are identical for every thread count because work is
// split by output rows only.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Threaded front-end over active().gemm.
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t a_row_stride, std::size_t a_col_stride, const double* b, std::size_t ldb,
          double* c, std::size_t ldc, bool accumulate);

// Runs body(begin, end) over [0, count) split into contiguous chunks on up
// to num_threads() threads.
template <typename Body>
void parallel_rows(std::size_t count, std::size_t min_chunk, Body&& body);

}  // namespace seqcluster::kernels

#include "seqcluster/detail/parallel.hpp"
