#ifndef IFCF_H
#define IFCF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IfcfCurvature {
  IFCF_CURVATURE_MEAN = 0,
  IFCF_CURVATURE_GAUSS_ROOT = 1,
} IfcfCurvature;

// Result codes. Values 2 to 9 match the exit codes of the `ifcf` binary.
typedef enum IfcfStatus {
  IFCF_STATUS_OK = 0,
  IFCF_STATUS_CONFIG = 2,
  IFCF_STATUS_NOT_SPACELIKE = 3,
  IFCF_STATUS_NOT_CONVEX = 4,
  IFCF_STATUS_STIFFNESS = 5,
  IFCF_STATUS_IO = 6,
  IFCF_STATUS_DOMAIN = 7,
  IFCF_STATUS_NUMERICAL = 8,
  IFCF_STATUS_SERIES = 9,
  IFCF_STATUS_NULL_POINTER = 10,
  IFCF_STATUS_PANIC = 11,
} IfcfStatus;

// Warp kinds accepted by [`ifcf_model_new`].
typedef enum IfcfWarp {
  IFCF_WARP_EXACT = 0,
  IFCF_WARP_PERTURBED = 1,
  IFCF_WARP_INVERSE_PERTURBED = 2,
} IfcfWarp;

// Opaque ARW model.
typedef struct IfcfModel IfcfModel;

// Opaque flow run built from a TOML config.
typedef struct IfcfSimulation IfcfSimulation;

typedef struct IfcfWarpDerivatives {
  double f;
  double df;
  double d2f;
  double d3f;
} IfcfWarpDerivatives;

typedef struct IfcfHomogeneousSample {
  double t;
  double u;
  double u_tilde;
  double f_value;
} IfcfHomogeneousSample;

typedef struct IfcfRecord {
  double t;
  double u_min;
  double u_max;
  double f_min;
  double f_max;
  double umbilicity;
  double metric_deviation;
} IfcfRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library on this thread.
const char *ifcf_last_error_message(void);

// Creates a model with `sigma = I + tau^2 amplitude cos x^1 e_1 e_1` and
// `psi = psi_amplitude tau^2 cos x^1`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum IfcfStatus ifcf_model_new(uintptr_t n,
                               double omega,
                               double m,
                               double a,
                               enum IfcfWarp warp,
                               double epsilon,
                               double sigma_amplitude,
                               double psi_amplitude,
                               struct IfcfModel **out);

// # Safety
// `model` must come from [`ifcf_model_new`] and not be used afterwards.
void ifcf_model_free(struct IfcfModel *model);

// Warp function and its first three derivatives at time `tau`.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum IfcfStatus ifcf_warp_eval(const struct IfcfModel *model,
                               double tau,
                               struct IfcfWarpDerivatives *out);

// `F(kappa)` for `n` principal curvatures.
//
// # Safety
// `kappa` must point to `n` readable values and `out` must be valid.
enum IfcfStatus ifcf_curvature_value(enum IfcfCurvature kind,
                                     const double *kappa,
                                     uintptr_t n,
                                     double *out);

// `dF / d kappa_i` written to `out[0..n]`.
//
// # Safety
// `kappa` must point to `n` readable values and `out` to `n` writable ones.
enum IfcfStatus ifcf_curvature_gradient(enum IfcfCurvature kind,
                                        const double *kappa,
                                        uintptr_t n,
                                        double *out);

// Constant-graph closed form of the exact model at time `t`.
//
// # Safety
// `out` must be a valid pointer.
enum IfcfStatus ifcf_oracle_homogeneous(uintptr_t n,
                                        double omega,
                                        double m,
                                        double u0,
                                        double t,
                                        struct IfcfHomogeneousSample *out);

// Parses and validates a TOML run config.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum IfcfStatus ifcf_simulation_new(const char *toml, struct IfcfSimulation **out);

// # Safety
// `sim` must come from [`ifcf_simulation_new`] and not be used afterwards.
void ifcf_simulation_free(struct IfcfSimulation *sim);

// Runs the flow. A failed run keeps its partial trace.
//
// # Safety
// `sim` must be a live handle.
enum IfcfStatus ifcf_simulation_run(struct IfcfSimulation *sim);

// Number of trace records, 0 before a run.
//
// # Safety
// `sim` must be a live handle and `out` a valid pointer.
enum IfcfStatus ifcf_simulation_record_count(const struct IfcfSimulation *sim, uintptr_t *out);

// Scalar summary of record `index`.
//
// # Safety
// `sim` must be a live handle and `out` a valid pointer.
enum IfcfStatus ifcf_simulation_record(const struct IfcfSimulation *sim,
                                       uintptr_t index,
                                       struct IfcfRecord *out);

// Writes the trace directory of a finished run.
//
// # Safety
// `sim` must be a live handle and `dir` a NUL-terminated path.
enum IfcfStatus ifcf_simulation_write_trace(const struct IfcfSimulation *sim, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IFCF_H */
