#ifndef TQNAV_H
#define TQNAV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Zero is success.
typedef enum TqnavStatus {
  TQNAV_STATUS_OK = 0,
  TQNAV_STATUS_NULL_POINTER = 1,
  TQNAV_STATUS_INVALID_INPUT = 2,
  TQNAV_STATUS_DOMAIN = 3,
  TQNAV_STATUS_CONFIG = 4,
  TQNAV_STATUS_FAULT = 5,
  TQNAV_STATUS_PARSE = 6,
  TQNAV_STATUS_IO = 7,
  TQNAV_STATUS_PANIC = 8,
  TQNAV_STATUS_UTF8 = 9,
} TqnavStatus;

// Outcome of a measurement update.
typedef enum TqnavUpdate {
  TQNAV_UPDATE_APPLIED = 0,
  TQNAV_UPDATE_GATED = 1,
} TqnavUpdate;

// Opaque filter handle.
typedef struct TqnavFilter TqnavFilter;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a filter from a TOML configuration (NULL for defaults).
//
// The filter kind, start position, attitude and odometer scale come from the
// `[replay]` section. `t0` is the time of the initial state, s.
//
// # Safety
// `config_toml` must be NULL or a NUL-terminated string; `out` must be valid
// for a pointer write.
enum TqnavStatus tqnav_filter_new(const char *config_toml, double t0, struct TqnavFilter **out);

// Releases a filter. NULL is ignored.
//
// # Safety
// `h` must be NULL or a handle from [`tqnav_filter_new`] not yet freed.
void tqnav_filter_free(struct TqnavFilter *h);

// Propagates with one raw IMU sample taken at `t` (after the previous one).
// `gyro` is rad/s and `accel` m/s², both body frame, 3 doubles each.
//
// # Safety
// `h` must be a live handle; `gyro` and `accel` must point to 3 doubles.
enum TqnavStatus tqnav_filter_propagate(struct TqnavFilter *h,
                                        double t,
                                        const double *gyro,
                                        const double *accel);

// Zero-velocity update at the current estimate. `outcome` may be NULL.
//
// # Safety
// `h` must be a live handle; `outcome` must be NULL or writable.
enum TqnavStatus tqnav_filter_update_zero_velocity(struct TqnavFilter *h,
                                                   enum TqnavUpdate *outcome);

// Odometer update with a pulse rate in pulses/s. `outcome` may be NULL.
//
// # Safety
// `h` must be a live handle; `outcome` must be NULL or writable.
enum TqnavStatus tqnav_filter_update_odometer(struct TqnavFilter *h,
                                              double pulse_rate,
                                              enum TqnavUpdate *outcome);

// Roll, pitch, yaw of the body in the local navigation frame, deg.
//
// # Safety
// `h` must be a live handle; `rpy_deg` must point to 3 writable doubles.
enum TqnavStatus tqnav_filter_attitude(struct TqnavFilter *h, double *rpy_deg);

// Odometer parameters: K (p/m), ψ and θ (deg), lever arm x, y, z (m).
//
// # Safety
// `h` must be a live handle; `out` must point to 6 writable doubles.
enum TqnavStatus tqnav_filter_params(struct TqnavFilter *h, double *out);

// Number of error states.
size_t tqnav_state_dim(void);

// Index of the first odometer-parameter error state.
size_t tqnav_param_offset(void);

// 1σ of every error state in the filter's own coordinates.
//
// # Safety
// `h` must be a live handle; `out` must point to `tqnav_state_dim()` doubles.
enum TqnavStatus tqnav_filter_sigmas(struct TqnavFilter *h, double *out);

// Copies the calling thread's last error message into `buf`, NUL-terminated
// and truncated to `len`. Returns the full message length without the NUL.
//
// # Safety
// `buf` must be NULL or point to `len` writable bytes.
size_t tqnav_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TQNAV_H */
