#ifndef VRPVP_H
#define VRPVP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VrpvpObjective {
  VRPVP_OBJECTIVE_MAX_MIN = 0,
  // Total of `VrpvpOptions::stakeholder` (1-based).
  VRPVP_OBJECTIVE_STAKEHOLDER = 1,
  // Unweighted sum over stakeholders.
  VRPVP_OBJECTIVE_SUM = 2,
} VrpvpObjective;

typedef enum VrpvpStatus {
  VRPVP_STATUS_OK = 0,
  VRPVP_STATUS_NULL_ARGUMENT = 1,
  VRPVP_STATUS_INVALID_UTF8 = 2,
  VRPVP_STATUS_PARSE = 3,
  VRPVP_STATUS_INVALID_INSTANCE = 4,
  VRPVP_STATUS_DIMENSION = 5,
  VRPVP_STATUS_INVALID_ARGUMENT = 6,
  VRPVP_STATUS_LP = 7,
  VRPVP_STATUS_IO = 8,
  VRPVP_STATUS_TRANSPORT = 9,
  VRPVP_STATUS_OUT_OF_RANGE = 10,
  VRPVP_STATUS_PANIC = 11,
} VrpvpStatus;

// Opaque instance handle.
typedef struct VrpvpInstance VrpvpInstance;

// Opaque solve report handle.
typedef struct VrpvpReport VrpvpReport;

typedef struct VrpvpOptions {
  enum VrpvpObjective objective;
  uint32_t stakeholder;
  // Columns added per pricing round; 0 adds every violating route.
  uint64_t max_columns;
  uint64_t iteration_cap;
  // Seconds; 0 or negative means no limit.
  double time_limit_s;
  uint32_t workers;
} VrpvpOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *vrpvp_last_error(void);

// Library version as a static NUL-terminated string.
const char *vrpvp_version(void);

struct VrpvpOptions vrpvp_options_default(void);

// Parses an instance document. Relative matrix paths resolve against the
// current directory.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum VrpvpStatus vrpvp_instance_from_json(const char *json, struct VrpvpInstance **out);

// Loads an instance file; relative matrix paths resolve against its directory.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum VrpvpStatus vrpvp_instance_from_file(const char *path, struct VrpvpInstance **out);

// # Safety
// `instance` must come from this library and not be used afterwards.
void vrpvp_instance_free(struct VrpvpInstance *instance);

// Number of sites, or 0 for a null handle.
//
// # Safety
// `instance` must be null or a live handle.
size_t vrpvp_instance_site_count(const struct VrpvpInstance *instance);

// Number of stakeholders, or 0 for a null handle.
//
// # Safety
// `instance` must be null or a live handle.
size_t vrpvp_instance_stakeholder_count(const struct VrpvpInstance *instance);

// Solves with the instance's own metric. A null `options` uses the defaults.
//
// # Safety
// `instance` must be a live handle, `options` null or valid, `out` valid.
enum VrpvpStatus vrpvp_solve(const struct VrpvpInstance *instance,
                             const struct VrpvpOptions *options,
                             struct VrpvpReport **out);

// Solves with a caller-supplied row-major `dim × dim` cost matrix, node 0
// being the depot. `unit_hours` selects hours over km.
//
// # Safety
// `costs` must point to `dim * dim` doubles; other pointers as in [`vrpvp_solve`].
enum VrpvpStatus vrpvp_solve_with_matrix(const struct VrpvpInstance *instance,
                                         const double *costs,
                                         size_t dim,
                                         bool unit_hours,
                                         const struct VrpvpOptions *options,
                                         struct VrpvpReport **out);

// # Safety
// `report` must come from this library and not be used afterwards.
void vrpvp_report_free(struct VrpvpReport *report);

// LP bound in maximization form; NaN for a null handle.
//
// # Safety
// `report` must be null or a live handle.
double vrpvp_report_z_lp(const struct VrpvpReport *report);

// Integer objective in maximization form; NaN for a null handle.
//
// # Safety
// `report` must be null or a live handle.
double vrpvp_report_z_mip(const struct VrpvpReport *report);

// Optimality gap in percent; NaN when undefined or for a null handle.
//
// # Safety
// `report` must be null or a live handle.
double vrpvp_report_gap_pct(const struct VrpvpReport *report);

// Number of selected routes, or 0 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
size_t vrpvp_report_route_count(const struct VrpvpReport *report);

// Copies the closed tour of route `index` (depot = 0 at both ends) into
// `buf`. `*len` always receives the required length; a short buffer yields
// `OutOfRange` without writing.
//
// # Safety
// `buf` must hold `cap` elements; `len` must be valid.
enum VrpvpStatus vrpvp_report_route_tour(const struct VrpvpReport *report,
                                         size_t index,
                                         size_t *buf,
                                         size_t cap,
                                         size_t *len);

// Copies the per-stakeholder profit totals into `buf`, same protocol as
// [`vrpvp_report_route_tour`].
//
// # Safety
// `buf` must hold `cap` elements; `len` must be valid.
enum VrpvpStatus vrpvp_report_profit_sums(const struct VrpvpReport *report,
                                          double *buf,
                                          size_t cap,
                                          size_t *len);

// The full report as JSON; release with [`vrpvp_string_free`]. Null on a
// null handle.
//
// # Safety
// `report` must be null or a live handle.
char *vrpvp_report_to_json(const struct VrpvpReport *report);

// # Safety
// `s` must come from this library and not be used afterwards.
void vrpvp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VRPVP_H */
