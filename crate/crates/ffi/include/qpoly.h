#ifndef QPOLY_H
#define QPOLY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QpStatus {
  QP_STATUS_OK = 0,
  QP_STATUS_NULL_POINTER = 1,
  QP_STATUS_INVALID_ARGUMENT = 2,
  QP_STATUS_DIMENSION_MISMATCH = 3,
  QP_STATUS_NO_STEADY_STATE = 4,
  QP_STATUS_NUMERICAL = 5,
  QP_STATUS_UNSUPPORTED_ORDER = 6,
  QP_STATUS_SIMULATION = 7,
  QP_STATUS_IO = 8,
  QP_STATUS_BUFFER_TOO_SMALL = 9,
  QP_STATUS_PANIC = 10,
} QpStatus;

/*
 Liouvillian with its eigendecomposition, at a fixed measurement strength.
 */
typedef struct QpLiouvillian QpLiouvillian;

/*
 Model description: Hamiltonian, measured operator and dissipators.
 */
typedef struct QpModel QpModel;

/*
 Simulated detector record.
 */
typedef struct QpTrajectory QpTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *qp_version(void);

/*
 Length in bytes of the last error message on this thread, excluding NUL.
 */
size_t qp_last_error_length(void);

/*
 Copies the last error message into `buf` (NUL-terminated, truncated to
 `len - 1` bytes). Returns the full message length.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t qp_last_error_message(char *buf, size_t len);

/*
 Spin-1/2 with `H = w.sigma/2`, measured along z, relaxing at `gamma`
 toward the maximally mixed state.

 # Safety
 `out_model` must be a valid pointer.
 */
enum QpStatus qp_model_single_spin(double wx,
                                   double wy,
                                   double wz,
                                   double gamma,
                                   struct QpModel **out_model);

/*
 Indium donor pair in ZnO. Field in tesla, rates in 1/ns, time unit ns.
 `temperature <= 0` selects the high-temperature limit.

 # Safety
 `out_model` must be a valid pointer.
 */
enum QpStatus qp_model_zno(double bx,
                           double by,
                           double bz,
                           double temperature,
                           double gamma_e,
                           double gamma_n,
                           int x_only_hyperfine,
                           struct QpModel **out_model);

/*
 Model from explicit `d x d` matrices with no dissipators yet.

 # Safety
 `h` and `a` must point to `2*d*d` doubles; `out_model` must be valid.
 */
enum QpStatus qp_model_from_matrices(size_t d,
                                     const double *h,
                                     const double *a,
                                     struct QpModel **out_model);

/*
 Adds `rate * (L rho L+ - {L+L, rho}/2)`.

 # Safety
 `model` must be a live handle; `jump` must point to `2*d*d` doubles.
 */
enum QpStatus qp_model_add_lindblad(struct QpModel *model, double rate, const double *jump);

/*
 Adds relaxation `rate * (Tr(rho) rho_final - rho)` on the whole space.

 # Safety
 `model` must be a live handle; `rho_final` must point to `2*d*d` doubles.
 */
enum QpStatus qp_model_add_relaxation(struct QpModel *model, double rate, const double *rho_final);

/*
 # Safety
 `model` must be a live handle; `out_dim` must be valid.
 */
enum QpStatus qp_model_dim(const struct QpModel *model, size_t *out_dim);

/*
 Writes the 64 hex digits of the model hash plus a NUL into `buf`.

 # Safety
 `model` must be a live handle; `buf` must hold `len` bytes.
 */
enum QpStatus qp_model_hash(const struct QpModel *model, char *buf, size_t len);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void qp_model_free(struct QpModel *model);

/*
 Builds the Liouvillian at measurement strength `beta`; the measurement
 dephasing term is included when `measurement_damping` is non-zero.

 # Safety
 `model` must be a live handle; `out_l` must be valid.
 */
enum QpStatus qp_liouvillian_new(const struct QpModel *model,
                                 double beta,
                                 int measurement_damping,
                                 struct QpLiouvillian **out_l);

/*
 # Safety
 `l` must be null or a handle not yet freed.
 */
void qp_liouvillian_free(struct QpLiouvillian *l);

/*
 Steady state as `2*d*d` interleaved doubles, row-major.

 # Safety
 `l` must be a live handle; `rho` must hold `2*d*d` doubles.
 */
enum QpStatus qp_liouvillian_steady_state(const struct QpLiouvillian *l, double *rho);

/*
 Power spectrum at angular frequency `omega`.

 # Safety
 `l` must be a live handle; `value` must be valid.
 */
enum QpStatus qp_s2(const struct QpLiouvillian *l, double omega, int shot_noise, double *value);

/*
 Bispectrum `S3(w1, w2)`.

 # Safety
 `l` must be a live handle; `re` and `im` must be valid.
 */
enum QpStatus qp_s3(const struct QpLiouvillian *l, double w1, double w2, double *re, double *im);

/*
 Trispectrum `S4(w1, w2, w3)`, fourth frequency `-(w1 + w2 + w3)`.

 # Safety
 `l` must be a live handle; `re` and `im` must be valid.
 */
enum QpStatus qp_s4(const struct QpLiouvillian *l,
                    double w1,
                    double w2,
                    double w3,
                    double *re,
                    double *im);

/*
 Correlation cut `S4(w1, -w1, w2, -w2)`.

 # Safety
 `l` must be a live handle; `value` must be valid.
 */
enum QpStatus qp_s4_cut(const struct QpLiouvillian *l, double w1, double w2, double *value);

/*
 Power spectrum on `n` increasing angular frequencies.

 # Safety
 `omegas` and `values` must hold `n` doubles.
 */
enum QpStatus qp_s2_grid(const struct QpLiouvillian *l,
                         const double *omegas,
                         size_t n,
                         int shot_noise,
                         double *values);

/*
 Bispectrum on `n1 x n2` points, row-major over `ax1`.

 # Safety
 Axes hold `n1`, `n2` doubles; `re` and `im` hold `n1*n2`.
 */
enum QpStatus qp_s3_grid(const struct QpLiouvillian *l,
                         const double *ax1,
                         size_t n1,
                         const double *ax2,
                         size_t n2,
                         double *re,
                         double *im);

/*
 Trispectrum correlation cut on `n1 x n2` points, row-major over `ax1`.

 # Safety
 Axes hold `n1`, `n2` doubles; `values` holds `n1*n2`.
 */
enum QpStatus qp_s4_cut_grid(const struct QpLiouvillian *l,
                             const double *ax1,
                             size_t n1,
                             const double *ax2,
                             size_t n2,
                             double *values);

/*
 Time-domain cumulant of order `n` (2 to 4) of the detector output.

 # Safety
 `times` must hold `n` doubles; `value` must be valid.
 */
enum QpStatus qp_cumulant(const struct QpLiouvillian *l,
                          const double *times,
                          size_t n,
                          double *value);

/*
 Integrates the stochastic master equation from the steady state.

 # Safety
 `model` must be a live handle; `out_traj` must be valid.
 */
enum QpStatus qp_simulate(const struct QpModel *model,
                          double beta,
                          double dt,
                          size_t steps,
                          uint64_t seed,
                          struct QpTrajectory **out_traj);

/*
 # Safety
 `traj` must be a live handle; `n` must be valid.
 */
enum QpStatus qp_trajectory_len(const struct QpTrajectory *traj, size_t *n);

/*
 Copies the detector samples into `buf`.

 # Safety
 `buf` must hold `len` doubles.
 */
enum QpStatus qp_trajectory_samples(const struct QpTrajectory *traj, double *buf, size_t len);

/*
 Writes the binary trajectory and its JSON sidecar.

 # Safety
 `traj` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum QpStatus qp_trajectory_save(const struct QpTrajectory *traj, const char *path);

/*
 # Safety
 `path` must be a NUL-terminated UTF-8 string; `out_traj` must be valid.
 */
enum QpStatus qp_trajectory_load(const char *path, struct QpTrajectory **out_traj);

/*
 # Safety
 `traj` must be null or a handle not yet freed.
 */
void qp_trajectory_free(struct QpTrajectory *traj);

/*
 Frame-averaged power spectrum of `n` samples on bins `0..=frame_length/2`.
 `omega`, `value` and `std_err` must each hold `frame_length/2 + 1` doubles.

 # Safety
 Buffer sizes as stated above.
 */
enum QpStatus qp_estimate_s2(const double *z,
                             size_t n,
                             double dt,
                             size_t frame_length,
                             size_t frames_per_estimate,
                             double *omega,
                             double *value,
                             double *std_err);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QPOLY_H */
