#ifndef ROA_H
#define ROA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RoaStatus {
  ROA_STATUS_OK = 0,
  ROA_STATUS_NULL_POINTER = 1,
  ROA_STATUS_INVALID_UTF8 = 2,
  ROA_STATUS_INVALID_ARGUMENT = 3,
  ROA_STATUS_CONFIG = 4,
  ROA_STATUS_INFEASIBLE = 5,
  ROA_STATUS_PARSE = 6,
  ROA_STATUS_BUFFER_TOO_SMALL = 7,
  ROA_STATUS_OUT_OF_RANGE = 8,
  ROA_STATUS_PANIC = 9,
} RoaStatus;

// A certified sublevel set with its multipliers.
typedef struct RoaCertificate RoaCertificate;

// The certificates of a multi-round run, one per round.
typedef struct RoaEstimate RoaEstimate;

// A polynomial vector field with an equilibrium at the origin.
typedef struct RoaSystem RoaSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf`.
//
// # Safety
// `buf` must hold `len` bytes or be null; `needed` may be null.
enum RoaStatus roa_last_error_message(char *buf, size_t len, size_t *needed);

// Loads a shipped benchmark system: "vdp", "ex2", "ex3" or "ex4".
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum RoaStatus roa_system_preset(const char *name, struct RoaSystem **out);

// Builds a system from `nvars` right-hand sides in polynomial text.
//
// # Safety
// `rhs` must point to `nvars` NUL-terminated strings; `out` must be valid.
enum RoaStatus roa_system_parse(const char *name,
                                const char *const *rhs,
                                size_t nvars,
                                struct RoaSystem **out);

// # Safety
// `sys` must be null or a handle from this library.
size_t roa_system_nvars(const struct RoaSystem *sys);

// Evaluates the vector field at `x` (length `nvars`) into `out` (length `nvars`).
//
// # Safety
// `x` and `out` must hold `nvars` doubles.
enum RoaStatus roa_system_eval(const struct RoaSystem *sys,
                               const double *x,
                               size_t nvars,
                               double *out);

// # Safety
// `sys` must be null or an unfreed handle from this library.
void roa_system_free(struct RoaSystem *sys);

// Runs every round of a TOML run config (the `roa estimate` format).
//
// # Safety
// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
enum RoaStatus roa_estimate(const char *config_toml, struct RoaEstimate **out);

// # Safety
// `est` must be null or a handle from this library.
size_t roa_estimate_round_count(const struct RoaEstimate *est);

// Copies round `index` (0-based) into a new certificate handle.
//
// # Safety
// `est` must be a handle from this library and `out` a valid pointer.
enum RoaStatus roa_estimate_certificate(const struct RoaEstimate *est,
                                        size_t index,
                                        struct RoaCertificate **out);

// # Safety
// `est` must be null or an unfreed handle from this library.
void roa_estimate_free(struct RoaEstimate *est);

// Parses the certificate text format.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum RoaStatus roa_certificate_parse(const char *text, struct RoaCertificate **out);

// Writes the certificate text format into `buf`; call with a null `buf`
// to learn the size through `needed`.
//
// # Safety
// `buf` must hold `len` bytes or be null; `needed` may be null.
enum RoaStatus roa_certificate_to_text(const struct RoaCertificate *cert,
                                       char *buf,
                                       size_t len,
                                       size_t *needed);

// # Safety
// `cert` must be null or a handle from this library.
size_t roa_certificate_nvars(const struct RoaCertificate *cert);

// Certified level `gamma`, NaN for a null handle.
//
// # Safety
// `cert` must be null or a handle from this library.
double roa_certificate_gamma(const struct RoaCertificate *cert);

// `V(x)`.
//
// # Safety
// `x` must hold `nvars` doubles and `value` be valid.
enum RoaStatus roa_certificate_eval(const struct RoaCertificate *cert,
                                    const double *x,
                                    size_t nvars,
                                    double *value);

// Sets `*inside` to 1 when `V(x) <= gamma`, else 0.
//
// # Safety
// `x` must hold `nvars` doubles and `inside` be valid.
enum RoaStatus roa_certificate_contains(const struct RoaCertificate *cert,
                                        const double *x,
                                        size_t nvars,
                                        int32_t *inside);

// Re-solves every SOS condition of the certificate; `*passed` is 1 when all hold.
//
// # Safety
// `cert` must be a handle from this library and `passed` valid.
enum RoaStatus roa_certificate_replay(const struct RoaCertificate *cert, int32_t *passed);

// Samples the certified set inside the box `[lo, hi]` and simulates each
// sample; `*violations` receives the number of failed samples.
//
// # Safety
// `lo` and `hi` must hold `nvars` doubles and `violations` be valid.
enum RoaStatus roa_certificate_verify(const struct RoaCertificate *cert,
                                      const double *lo,
                                      const double *hi,
                                      size_t nvars,
                                      size_t samples,
                                      uint64_t seed,
                                      size_t *violations);

// # Safety
// `cert` must be null or an unfreed handle from this library.
void roa_certificate_free(struct RoaCertificate *cert);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROA_H */
