#ifndef GALACTIC_ORBITS_H
#define GALACTIC_ORBITS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define GALORB_BRANCH_X 0

#define GALORB_BRANCH_Y 1

typedef enum GalorbStatus {
  GALORB_STATUS_OK = 0,
  GALORB_STATUS_NULL_POINTER = 1,
  GALORB_STATUS_INVALID_PARAMS = 2,
  GALORB_STATUS_DOMAIN = 3,
  GALORB_STATUS_HYPOTHESIS = 4,
  GALORB_STATUS_RESONANCE = 5,
  GALORB_STATUS_NUMERIC = 6,
  GALORB_STATUS_NON_CONVERGENCE = 7,
  GALORB_STATUS_PANIC = 99,
} GalorbStatus;

// Opaque parameter set `(a, b, c, q)`.
typedef struct GalorbParams GalorbParams;

// A converged periodic orbit.
typedef struct GalorbOrbit {
  double ic[4];
  double period;
  double energy_error;
  double residual;
  uint32_t iterations;
  // Floquet multipliers, ascending modulus.
  double multipliers_re[4];
  double multipliers_im[4];
  double trivial_defect;
  double reciprocal_defect;
  double symplectic_defect;
} GalorbOrbit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a parameter handle. Free it with [`galorb_params_free`].
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum GalorbStatus galorb_params_new(double a,
                                    double b,
                                    double c,
                                    double q,
                                    struct GalorbParams **out);

// # Safety
// `p` must come from [`galorb_params_new`] and not have been freed. Null is
// ignored.
void galorb_params_free(struct GalorbParams *p);

// # Safety
// `p` must be a live handle, `state` must point to 4 doubles, `out` to one.
enum GalorbStatus galorb_energy(const struct GalorbParams *p,
                                double eps,
                                const double *state,
                                double *out);

// Writes the Hamiltonian vector field at `state` into `out[0..4]`.
//
// # Safety
// `p` must be a live handle; `state` and `out` must each point to 4 doubles.
enum GalorbStatus galorb_vector_field(const struct GalorbParams *p,
                                      double eps,
                                      const double *state,
                                      double *out);

// Closed-form zeros `-r, +r` of the averaged function on level `h`.
//
// # Safety
// `p` must be a live handle; `minus` and `plus` must be writable.
enum GalorbStatus galorb_predicted_zeros(const struct GalorbParams *p,
                                         int branch,
                                         double h,
                                         double *minus,
                                         double *plus);

// Averaged function at amplitude `alpha` by finite-part quadrature.
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum GalorbStatus galorb_averaged_function(const struct GalorbParams *p,
                                           int branch,
                                           double h,
                                           double alpha,
                                           double *out);

// Closed form of the averaged function at amplitude `alpha`.
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum GalorbStatus galorb_averaged_closed(const struct GalorbParams *p,
                                         int branch,
                                         double h,
                                         double alpha,
                                         double *out);

// `det Delta` of the branch's gap matrix.
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum GalorbStatus galorb_gap_determinant(const struct GalorbParams *p, int branch, double *out);

// Period of the axial orbit on level `h` from the one-degree-of-freedom
// quadrature.
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum GalorbStatus galorb_axial_period(const struct GalorbParams *p,
                                      int branch,
                                      double h,
                                      double eps,
                                      double *out);

// Shoots a periodic orbit of the full system on level `h` from `guess`
// (4 doubles) and `guess_period`. A null `guess` starts from the
// unperturbed axial orbit of `branch`.
//
// # Safety
// `p` must be a live handle, `guess` null or 4 doubles, `out` writable.
enum GalorbStatus galorb_shoot_periodic(const struct GalorbParams *p,
                                        int branch,
                                        double h,
                                        double eps,
                                        const double *guess,
                                        double guess_period,
                                        struct GalorbOrbit *out);

// Runs the whole pipeline on level `h`. Writes the number of distinct
// converged orbits to `count` and, if `orbits` is non-null, up to
// `capacity` of them. `inconclusive` receives a bit mask of branches whose
// averaged function vanishes identically (bit 0 x, bit 1 y).
//
// # Safety
// `p` must be a live handle; `count` and `inconclusive` writable; `orbits`
// null or valid for `capacity` elements.
enum GalorbStatus galorb_count_orbits(const struct GalorbParams *p,
                                      double h,
                                      double eps,
                                      struct GalorbOrbit *orbits,
                                      size_t capacity,
                                      size_t *count,
                                      uint32_t *inconclusive);

// Copies the calling thread's last error message, NUL terminated and
// truncated to `len` bytes. Returns the full message length without the
// terminator, so a call with `len == 0` sizes the buffer.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
int galorb_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *galorb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GALACTIC_ORBITS_H */
