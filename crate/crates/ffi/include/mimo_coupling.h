#ifndef MIMO_COUPLING_H
#define MIMO_COUPLING_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Selects the profile a configuration is merged over.
 */
typedef enum McProfile {
  /*
   Use the file's `profile` key, or desk when absent.
   */
  MC_PROFILE_AUTO = 0,
  MC_PROFILE_DESK = 1,
  MC_PROFILE_PAPER = 2,
} McProfile;

typedef enum McSide {
  MC_SIDE_TRANSMIT = 0,
  MC_SIDE_RECEIVE = 1,
} McSide;

/*
 Result codes.
 */
typedef enum McStatus {
  MC_STATUS_OK = 0,
  MC_STATUS_NULL_POINTER = 1,
  MC_STATUS_INVALID_ARGUMENT = 2,
  MC_STATUS_ILL_CONDITIONED = 3,
  MC_STATUS_INVALID_GEOMETRY = 4,
  MC_STATUS_CONTRACT_VIOLATION = 5,
  MC_STATUS_CONFIG = 6,
  MC_STATUS_IO = 7,
  MC_STATUS_BUFFER_TOO_SMALL = 8,
  MC_STATUS_PANIC = 9,
} McStatus;

/*
 Opaque experiment configuration.
 */
typedef struct McConfig McConfig;

/*
 Opaque multipath realization.
 */
typedef struct McPathSet McPathSet;

/*
 Opaque outcome of one scheme run.
 */
typedef struct McResult McResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` as a
 NUL-terminated string, truncating to `cap` bytes. Returns the full message
 length excluding the terminator.

 # Safety
 `buf` must be null or point to `cap` writable bytes.
 */
size_t mc_last_error_message(char *buf, size_t cap);

/*
 Quality factor `1/λ_min` of a uniform array with spacing in wavelengths.

 # Safety
 `out` must be a valid pointer.
 */
enum McStatus mc_quality_factor(double spacing_lambda, size_t count, double *out);

/*
 Water-filling over `n` channel gains (singular values). Writes `n` powers
 and the water level.

 # Safety
 `singulars` and `powers` must point to `n` values; `level` must be valid.
 */
enum McStatus mc_water_fill(const double *singulars,
                            size_t n,
                            double noise,
                            double p_max,
                            double *powers,
                            double *level);

/*
 Parses a JSON configuration merged over `profile`.

 # Safety
 `json` must be a NUL-terminated string; `out` must be valid.
 */
enum McStatus mc_config_from_json(const char *json, enum McProfile profile, struct McConfig **out);

/*
 Profile defaults with no overrides; `Auto` means desk.

 # Safety
 `out` must be valid.
 */
enum McStatus mc_config_default(enum McProfile profile, struct McConfig **out);

/*
 # Safety
 `cfg` must be null or a handle from this library, not yet freed.
 */
void mc_config_free(struct McConfig *cfg);

/*
 Draws the realization of trial seed `seed` under `cfg`'s scenario.

 # Safety
 `cfg` must be a live handle; `out` must be valid.
 */
enum McStatus mc_pathset_draw(const struct McConfig *cfg, uint64_t seed, struct McPathSet **out);

/*
 Parses a path set in the `{"paths": [...]}` dump format.

 # Safety
 `json` must be a NUL-terminated string; `out` must be valid.
 */
enum McStatus mc_pathset_from_json(const char *json, struct McPathSet **out);

/*
 # Safety
 `paths` must be a live handle; `out` must be valid.
 */
enum McStatus mc_pathset_len(const struct McPathSet *paths, size_t *out);

/*
 # Safety
 `paths` must be null or a handle from this library, not yet freed.
 */
void mc_pathset_free(struct McPathSet *paths);

/*
 Runs scheme `c-ma`, `nc-ma`, `ula` or `cla` on one realization.

 # Safety
 `cfg` and `paths` must be live handles, `scheme` a NUL-terminated string
 and `out` valid.
 */
enum McStatus mc_run_scheme(const struct McConfig *cfg,
                            const struct McPathSet *paths,
                            const char *scheme,
                            struct McResult **out);

/*
 Physical objective and the objective under the scheme's own model, in
 bits/s/Hz. Either output may be null.

 # Safety
 `result` must be a live handle; non-null outputs must be valid.
 */
enum McStatus mc_result_objective(const struct McResult *result, double *physical, double *modeled);

/*
 Completed outer iterations and whether the run met its tolerance.

 # Safety
 `result` must be a live handle; non-null outputs must be valid.
 */
enum McStatus mc_result_iterations(const struct McResult *result,
                                   size_t *outer_iters,
                                   bool *converged);

/*
 Final element positions of one side, in wavelengths.

 # Safety
 `result` must be a live handle, `buf` must hold `cap` values and `len`
 must be valid.
 */
enum McStatus mc_result_positions(const struct McResult *result,
                                  enum McSide side,
                                  double *buf,
                                  size_t cap,
                                  size_t *len);

/*
 Objective after each outer iteration, starting with the initial point.

 # Safety
 As for [`mc_result_positions`].
 */
enum McStatus mc_result_trace(const struct McResult *result, double *buf, size_t cap, size_t *len);

/*
 # Safety
 `result` must be null or a handle from this library, not yet freed.
 */
void mc_result_free(struct McResult *result);

/*
 Runs the full experiment and writes its files under `out_dir`. Returns
 `ContractViolation` when some scheme failed on every trial; the files are
 written regardless.

 # Safety
 `cfg` must be a live handle and `out_dir` a NUL-terminated path.
 */
enum McStatus mc_run_experiment(const struct McConfig *cfg, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIMO_COUPLING_H */
