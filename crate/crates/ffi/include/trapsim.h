#ifndef TRAPSIM_H
#define TRAPSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TrapsimStatus {
  TRAPSIM_STATUS_OK = 0,
  TRAPSIM_STATUS_NULL_POINTER = 1,
  TRAPSIM_STATUS_INVALID_PARAMETER = 2,
  TRAPSIM_STATUS_DOMAIN = 3,
  TRAPSIM_STATUS_SOLVER = 4,
  TRAPSIM_STATUS_CONVERGENCE = 5,
  TRAPSIM_STATUS_FIT = 6,
  TRAPSIM_STATUS_DATA = 7,
  TRAPSIM_STATUS_PANIC = 8,
  /**
   * Reserved for failures outside the categories above.
   */
  TRAPSIM_STATUS_OTHER = 9,
} TrapsimStatus;

/**
 * A meshed trap with its factorized boundary operator.
 */
typedef struct TrapsimModel TrapsimModel;

/**
 * A magnetized sphere.
 */
typedef struct TrapsimParticle TrapsimParticle;

/**
 * Image-method equilibrium over an infinite plane, SI units and Hz.
 */
typedef struct TrapsimPlane {
  double z0;
  double k_z;
  double k_beta;
  double f_z;
  double f_beta;
} TrapsimPlane;

/**
 * Equilibrium coordinates and mode frequencies in (x, y, z, β, α) order.
 * Neutral modes report 0 Hz.
 */
typedef struct TrapsimModes {
  double equilibrium[5];
  double frequency[5];
} TrapsimModes;

typedef struct TrapsimLorentzian {
  double a0;
  double a1;
  double f0;
  double q;
  /**
   * Standard errors; infinite when a parameter is unconstrained.
   */
  double a0_se;
  double a1_se;
  double f0_se;
  double q_se;
  size_t bins_used;
} TrapsimLorentzian;

/**
 * 1/τ = c[0] + c[1]·P + c[2]·P², P in Pa. Unused entries are 0.
 */
typedef struct TrapsimPolyFit {
  size_t order;
  double coefficients[3];
  double standard_errors[3];
  double rss;
} TrapsimPolyFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (always
 * NUL-terminated when `len > 0`) and returns the full message length, or
 * 0 if there is none.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null.
 */
size_t trapsim_last_error(char *buf, size_t len);

/**
 * `radius` [m], `density` [kg/m³], `remanence` μ0M [T], `conductivity`
 * [S/m], `chi_imag` dimensionless.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum TrapsimStatus trapsim_particle_new(double radius,
                                        double density,
                                        double remanence,
                                        double conductivity,
                                        double chi_imag,
                                        struct TrapsimParticle **out);

/**
 * # Safety
 * `p` must come from [`trapsim_particle_new`] and not be freed twice.
 */
void trapsim_particle_free(struct TrapsimParticle *p);

/**
 * Mass [kg], moment of inertia [kg·m²] and dipole moment [A·m²].
 *
 * # Safety
 * `p` must be a live handle; the out-pointers must be valid.
 */
enum TrapsimStatus trapsim_particle_derived(const struct TrapsimParticle *p,
                                            double *mass,
                                            double *inertia,
                                            double *dipole);

/**
 * # Safety
 * `p` must be a live handle and `out` valid.
 */
enum TrapsimStatus trapsim_plane_equilibrium(const struct TrapsimParticle *p,
                                             struct TrapsimPlane *out);

/**
 * Radius [m] from measured f_z and f_β [Hz].
 *
 * # Safety
 * `out` must be valid.
 */
enum TrapsimStatus trapsim_radius_from_frequencies(double f_z, double f_beta, double *out);

/**
 * Builds and factorizes the trap. Lengths in m, `tilt` in rad; `panels`
 * of 0 selects the default mesh.
 *
 * # Safety
 * `p` must be a live handle and `out` valid.
 */
enum TrapsimStatus trapsim_model_new(const struct TrapsimParticle *p,
                                     double well_radius,
                                     double well_depth,
                                     double tilt,
                                     size_t panels,
                                     struct TrapsimModel **out);

/**
 * # Safety
 * `m` must come from [`trapsim_model_new`] and not be freed twice.
 */
void trapsim_model_free(struct TrapsimModel *m);

/**
 * Equilibrium search from the axis followed by the normal-mode analysis.
 *
 * # Safety
 * `m` must be a live handle and `out` valid.
 */
enum TrapsimStatus trapsim_model_solve(const struct TrapsimModel *m, struct TrapsimModes *out);

/**
 * Helium gas damping rate [1/s] at cold-side `pressure` [Pa] and
 * `temperature` [K]; `rotational` selects the rotational prefactor.
 *
 * # Safety
 * `p` must be a live handle and `out` valid.
 */
enum TrapsimStatus trapsim_gas_damping(const struct TrapsimParticle *p,
                                       double pressure,
                                       double temperature,
                                       bool rotational,
                                       double *out);

/**
 * Q = π f τ.
 *
 * # Safety
 * `out` must be valid.
 */
enum TrapsimStatus trapsim_q_from_ringdown(double frequency, double tau, double *out);

/**
 * Lorentzian fit of a one-sided PSD. A band with `band_hi <= band_lo`
 * uses the whole spectrum.
 *
 * # Safety
 * `frequency` and `psd` must point to `n` readable values; `out` valid.
 */
enum TrapsimStatus trapsim_fit_lorentzian(const double *frequency,
                                          const double *psd,
                                          size_t n,
                                          size_t exclude_bins,
                                          double band_lo,
                                          double band_hi,
                                          struct TrapsimLorentzian *out);

/**
 * Polynomial fit of decay rate against pressure. `sigma` may be null for
 * an unweighted fit.
 *
 * # Safety
 * `pressure`, `rate` and (if non-null) `sigma` must point to `n` readable
 * values; `out` valid.
 */
enum TrapsimStatus trapsim_fit_damping(const double *pressure,
                                       const double *rate,
                                       const double *sigma,
                                       size_t n,
                                       size_t order,
                                       struct TrapsimPolyFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAPSIM_H */
