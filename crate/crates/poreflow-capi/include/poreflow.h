/* C interface to the poreflow permeability solver. */

#ifndef POREFLOW_H
#define POREFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define POREFLOW_AXIS_X 0

#define POREFLOW_AXIS_Y 1

#define POREFLOW_AXIS_Z 2

/**
 * Model selection: AUTO picks the model the connectivity category calls for.
 */
#define POREFLOW_MODEL_AUTO 0

#define POREFLOW_MODEL_STOKES 1

#define POREFLOW_MODEL_STOKES_BRINKMAN 2

#define POREFLOW_MODEL_BRINKMAN 3

#define POREFLOW_MODEL_DARCY 4

/**
 * Reported when no solve ran (non-percolating sample under AUTO).
 */
#define POREFLOW_MODEL_NONE -1

#define POREFLOW_BC_PRESSURE_DROP 0

#define POREFLOW_BC_PERIODIC 1

/**
 * Fluid and porous voxels together span inlet to outlet, pure fluid does not.
 */
#define POREFLOW_CATEGORY_A 0

/**
 * The pure-fluid phase percolates on its own.
 */
#define POREFLOW_CATEGORY_B 1

/**
 * No spanning path even through porous voxels.
 */
#define POREFLOW_CATEGORY_NON_PERCOLATING 2

/**
 * Call outcome. Anything but OK leaves a message for
 * [poreflow_last_error_message].
 */
typedef enum PoreflowStatus {
  POREFLOW_STATUS_OK = 0,
  POREFLOW_STATUS_IO = 1,
  /**
   * Invalid configuration, dimensions or voxel data.
   */
  POREFLOW_STATUS_CONFIG = 2,
  /**
   * A solve was forced on a sample with no spanning pore path.
   */
  POREFLOW_STATUS_NON_PERCOLATING = 3,
  /**
   * Iteration budget exhausted or the operator lost definiteness.
   */
  POREFLOW_STATUS_NON_CONVERGENCE = 4,
  /**
   * Null pointer or out-of-range enum value at the boundary.
   */
  POREFLOW_STATUS_INVALID_ARGUMENT = 5,
  /**
   * Internal panic caught at the boundary.
   */
  POREFLOW_STATUS_PANIC = 6,
} PoreflowStatus;

/**
 * Opaque voxel image handle. Create with [poreflow_image_create] or
 * [poreflow_image_load_raw], release with [poreflow_image_free].
 */
typedef struct PoreflowImage PoreflowImage;

/**
 * Connectivity of one image along one axis.
 */
typedef struct PoreflowConnectivity {
  /**
   * One of the POREFLOW_CATEGORY constants.
   */
  int category;
  /**
   * Non-solid voxels that belong to no spanning component.
   */
  uint64_t removed_voxels;
  /**
   * Spanning components after isolated-region removal.
   */
  uint64_t component_count;
} PoreflowConnectivity;

/**
 * Everything a solve needs. Fill with [poreflow_default_options] first and
 * override fields as needed; zero or negative tolerance overrides mean
 * "derive from rtol_s", a non-positive k_stokes_mkda means "no fictitious
 * fluid permeability".
 */
typedef struct PoreflowSolveOptions {
  /**
   * Flow direction, one of the POREFLOW_AXIS constants.
   */
  int axis;
  /**
   * One of the POREFLOW_MODEL constants (AUTO classifies first).
   */
  int model;
  /**
   * One of the POREFLOW_BC constants.
   */
  int bc;
  double p_in;
  double p_out;
  /**
   * Physical edge length of the sample box in meters.
   */
  double l_meters;
  /**
   * Outer relative residual target.
   */
  double rtol_s;
  /**
   * Velocity-solve tolerance; <= 0 derives 1e-2 * rtol_s.
   */
  double rtol_a;
  /**
   * Preconditioner tolerance; <= 0 derives rtol_s.
   */
  double rtol_shat;
  int64_t maxit_outer;
  int64_t maxit_inner;
  /**
   * Fictitious fluid permeability in mkDa for Brinkman and Darcy.
   */
  double k_stokes_mkda;
  /**
   * Zero recorded wall times so repeated runs are byte-identical.
   */
  bool deterministic;
} PoreflowSolveOptions;

/**
 * One permeability computation: classification, model, reduced
 * permeability and solver statistics.
 */
typedef struct PoreflowPermeability {
  /**
   * One of the POREFLOW_CATEGORY constants.
   */
  int category;
  /**
   * Model actually solved; POREFLOW_MODEL_NONE when nothing ran.
   */
  int model;
  /**
   * One of the POREFLOW_AXIS constants.
   */
  int direction;
  /**
   * Dimensionless permeability of the unit cube.
   */
  double k_hat;
  double k_m2;
  double k_mkda;
  /**
   * Volume-averaged flow-axis velocity.
   */
  double darcy_velocity;
  /**
   * Applied drop; zero under periodic forcing.
   */
  double pressure_drop;
  /**
   * Independent estimate from the outlet-plane flux.
   */
  double k_hat_flux;
  /**
   * L2 norm of the discrete divergence of the reported velocity.
   */
  double divergence_norm;
  uint64_t iterations_outer;
  uint64_t inner_iterations_total;
  /**
   * Final relative residual of the pressure system.
   */
  double rel_residual;
  double wall_time_s;
} PoreflowPermeability;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next poreflow call on the same thread; the string
 * is empty if nothing failed yet.
 */
const char *poreflow_last_error_message(void);

/**
 * Create an image from a voxel buffer of porosity bytes in 0..=100,
 * x-fastest layout, length nx*ny*nz.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` to a writable image
 * pointer. The buffer is copied; the caller keeps ownership of `data`.
 */
enum PoreflowStatus poreflow_image_create(const uint8_t *data,
                                          uintptr_t len,
                                          uintptr_t nx,
                                          uintptr_t ny,
                                          uintptr_t nz,
                                          struct PoreflowImage **out);

/**
 * Load a raw image file of nx*ny*nz porosity bytes.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable image pointer.
 */
enum PoreflowStatus poreflow_image_load_raw(const char *path,
                                            uintptr_t nx,
                                            uintptr_t ny,
                                            uintptr_t nz,
                                            struct PoreflowImage **out);

/**
 * Release an image handle. Null is a no-op.
 *
 * # Safety
 * `image` must be a pointer returned by an image constructor, not yet
 * freed; it is invalid after this call.
 */
void poreflow_image_free(struct PoreflowImage *image);

/**
 * Total, resolved (pure fluid) and unresolved (porous) porosity fractions.
 *
 * # Safety
 * `image` must be a live image handle; the three outputs must be writable
 * or null (null outputs are skipped).
 */
enum PoreflowStatus poreflow_image_porosity(const struct PoreflowImage *image,
                                            double *total,
                                            double *resolved,
                                            double *unresolved);

/**
 * Classify pore-space connectivity along one axis.
 *
 * # Safety
 * `image` must be a live image handle and `out` writable.
 */
enum PoreflowStatus poreflow_classify(const struct PoreflowImage *image,
                                      int axis,
                                      struct PoreflowConnectivity *out);

/**
 * Fill `out` with the default solve options: auto model, pressure drop
 * 1 → 0 along z, L = 1 m, rtol 1e-8, derived inner tolerances,
 * K_stokes = 1e7 mkDa.
 *
 * # Safety
 * `out` must be writable.
 */
enum PoreflowStatus poreflow_default_options(struct PoreflowSolveOptions *out);

/**
 * Compute the effective permeability of `image` under `options`.
 *
 * In AUTO mode a non-percolating sample succeeds with a zero record; a
 * forced model on such a sample returns NON_PERCOLATING instead.
 *
 * # Safety
 * `image` must be a live image handle, `options` readable, `out` writable.
 */
enum PoreflowStatus poreflow_solve(const struct PoreflowImage *image,
                                   const struct PoreflowSolveOptions *options,
                                   struct PoreflowPermeability *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POREFLOW_H */
