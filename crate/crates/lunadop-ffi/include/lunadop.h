/* C API for the lunadop single-satellite lunar Doppler geolocation toolkit. */

#ifndef LUNADOP_H
#define LUNADOP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every API function.
typedef enum LndStatus {
  Ok = 0,
  NullArgument = 1,
  InvalidArgument = 2,
  Utf8 = 3,
  Io = 4,
  Parse = 5,
  Solver = 6,
  Panicked = 7,
} LndStatus;

// Solver output. Opaque.
typedef struct LndSolution LndSolution;

// Solver input: per-pass ephemerides and observations. Opaque.
typedef struct LndSolverInput LndSolverInput;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *lnd_version(void);

// Copy the last error message into `buf` (NUL-terminated, truncated to
// `cap`). Returns the full message length in bytes, excluding the NUL.
//
// # Safety
// `buf` must point to `cap` writable bytes, or be null (query mode).
size_t lnd_last_error(char *buf, size_t cap);

// Load solver input from a broadcast ephemeris JSON and an observation CSV.
// On success writes a heap handle to `out`; release it with
// [`lnd_input_free`].
//
// # Safety
// `ephemeris_path` and `observations_path` must be NUL-terminated strings;
// `out` must be a valid pointer.
enum LndStatus lnd_input_load(const char *ephemeris_path,
                              const char *observations_path,
                              struct LndSolverInput **out);

// Number of passes in a loaded input; 0 for a null handle.
//
// # Safety
// `input` must be a handle from [`lnd_input_load`] or null.
size_t lnd_input_n_passes(const struct LndSolverInput *input);

// Release an input handle. Null is a no-op.
//
// # Safety
// `input` must be a handle from [`lnd_input_load`], released exactly once.
void lnd_input_free(struct LndSolverInput *input);

// Run the three-step solve (single pass) or multi-pass disambiguation on a
// loaded input, with optional scenario TOML for solver parameters
// (`config_path` may be null for defaults). Writes a solution handle to
// `out`; release it with [`lnd_solution_free`].
//
// # Safety
// `input` must be a live handle; `config_path` null or NUL-terminated;
// `out` valid.
enum LndStatus lnd_solve(const struct LndSolverInput *input,
                         const char *config_path,
                         struct LndSolution **out);

// Receiver position estimate (km) into `out_xyz[0..3]`.
//
// # Safety
// `sol` must be a live solution handle; `out_xyz` must point to 3 f64.
enum LndStatus lnd_solution_position(const struct LndSolution *sol, double *out_xyz);

// Mirror-side candidate position (km); `InvalidArgument` when absent.
//
// # Safety
// `sol` must be a live solution handle; `out_xyz` must point to 3 f64.
enum LndStatus lnd_solution_mirror(const struct LndSolution *sol, double *out_xyz);

// Final weighted cost.
//
// # Safety
// `sol` live, `out` valid.
enum LndStatus lnd_solution_cost(const struct LndSolution *sol, double *out);

// Iteration counts for steps 2 and 3.
//
// # Safety
// `sol` live; `out_step2` and `out_step3` valid.
enum LndStatus lnd_solution_iterations(const struct LndSolution *sol,
                                       uint32_t *out_step2,
                                       uint32_t *out_step3);

// Whether both descent steps converged (1) or hit a cap/degeneracy (0),
// plus the pass count used.
//
// # Safety
// `sol` live; outputs valid.
enum LndStatus lnd_solution_converged(const struct LndSolution *sol,
                                      uint8_t *out_converged,
                                      size_t *out_n_passes);

// Whether multi-pass clustering fell back to the joint-cost comparison:
// 0 = clean clustering, 1 = ambiguous, 2 = single pass (not applicable).
//
// # Safety
// `sol` live; `out` valid.
enum LndStatus lnd_solution_ambiguous(const struct LndSolution *sol, uint8_t *out);

// Release a solution handle. Null is a no-op.
//
// # Safety
// `sol` must be a handle from [`lnd_solve`], released exactly once.
void lnd_solution_free(struct LndSolution *sol);

// Simulate one scenario realization to `out_dir` (ephemeris.json,
// observations.csv, manifest.json), as the CLI `simulate` command does.
// `config_path` may be null for defaults; `seed` overrides the scenario
// seed; `passes` overrides the pass count when nonzero.
//
// # Safety
// Paths null or NUL-terminated as documented.
enum LndStatus lnd_simulate_to_dir(const char *config_path,
                                   uint64_t seed,
                                   uint32_t passes,
                                   const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LUNADOP_H */
