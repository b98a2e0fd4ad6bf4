#ifndef AMBI_ECHOES_H
#define AMBI_ECHOES_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * RdRIR solver.
 */
typedef enum AeMethod {
  AE_METHOD_AC = 0,
  AE_METHOD_COV = 1,
  AE_METHOD_ADMM = 2,
} AeMethod;

/**
 * Result codes.
 */
typedef enum AeStatus {
  AE_STATUS_OK = 0,
  AE_STATUS_NULL_POINTER = 1,
  AE_STATUS_INVALID_ARGUMENT = 2,
  AE_STATUS_CONFIG = 3,
  AE_STATUS_FORMAT = 4,
  AE_STATUS_NUMERICAL = 5,
  AE_STATUS_IO = 6,
  AE_STATUS_BUFFER_TOO_SMALL = 7,
  AE_STATUS_PANIC = 8,
} AeStatus;

typedef struct AeEchoList AeEchoList;

typedef struct AeGtvv AeGtvv;

typedef struct AeRdrir AeRdrir;

/**
 * Scene under construction; index 0 is the direct path.
 */
typedef struct AeScene AeScene;

typedef struct AeSignal AeSignal;

typedef struct AeDirection {
  double azimuth_deg;
  double elevation_deg;
} AeDirection;

typedef struct AeEcho {
  /**
   * Relative delay in samples.
   */
  int64_t delay;
  double azimuth_deg;
  double elevation_deg;
  double gain;
  double correlation;
} AeEcho;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ae_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ae_version(void);

enum AeStatus ae_scene_new(uint32_t order,
                           double sample_rate,
                           uint32_t pulse_halfwidth,
                           struct AeScene **out);

/**
 * Parses a scene file (angles in degrees).
 */
enum AeStatus ae_scene_from_json(const char *json, struct AeScene **out);

enum AeStatus ae_scene_add_wavefront(struct AeScene *scene,
                                     double toa_s,
                                     double gain,
                                     double azimuth_deg,
                                     double elevation_deg);

void ae_scene_free(struct AeScene *scene);

/**
 * Renders the scene excited by white noise. Pass a NaN `snr_db` for a
 * noiseless recording.
 */
enum AeStatus ae_render_white(const struct AeScene *scene,
                              double duration_s,
                              double snr_db,
                              uint64_t seed,
                              struct AeSignal **out);

/**
 * Wraps `frames` interleaved frames of `(order+1)²` N3D channels.
 */
enum AeStatus ae_signal_from_interleaved(uint32_t order,
                                         double sample_rate,
                                         const double *data,
                                         size_t frames,
                                         struct AeSignal **out);

enum AeStatus ae_signal_dims(const struct AeSignal *signal, size_t *channels, size_t *frames);

void ae_signal_free(struct AeSignal *signal);

/**
 * Refines the DoA and estimates the GTVV with the refined reference.
 * `config_json` may be null for defaults; `doa` may be null.
 */
enum AeStatus ae_estimate_gtvv(const struct AeSignal *signal,
                               const char *config_json,
                               struct AeGtvv **out,
                               struct AeDirection *doa);

/**
 * Row count `(L+1)²`, axis length and sample rate (which may be null).
 */
enum AeStatus ae_gtvv_dims(const struct AeGtvv *g, size_t *rows, size_t *len, double *sample_rate);

enum AeStatus ae_gtvv_copy(const struct AeGtvv *g, double *buf, size_t cap);

enum AeStatus ae_gtvv_doa(const struct AeGtvv *g, struct AeDirection *doa);

/**
 * Share of energy at negative lags.
 */
enum AeStatus ae_gtvv_acausal_fraction(const struct AeGtvv *g, double *fraction);

void ae_gtvv_free(struct AeGtvv *g);

/**
 * Solves for the reference filter with window `j_max`. `config_json`
 * (nullable) supplies the ADMM settings.
 */
enum AeStatus ae_rdrir_solve(const struct AeGtvv *g,
                             size_t j_max,
                             enum AeMethod method,
                             const char *config_json,
                             struct AeRdrir **out);

enum AeStatus ae_rdrir_dims(const struct AeRdrir *r,
                            size_t *rows,
                            size_t *len,
                            double *sample_rate);

enum AeStatus ae_rdrir_copy(const struct AeRdrir *r, double *buf, size_t cap);

/**
 * Filter taps a[0..=j_max]; `count` receives the number written.
 */
enum AeStatus ae_rdrir_taps(const struct AeRdrir *r, double *buf, size_t cap, size_t *count);

void ae_rdrir_free(struct AeRdrir *r);

/**
 * Echoes of the omni-style GTVV matrix (raw direction fit).
 */
enum AeStatus ae_gtvv_echoes(const struct AeGtvv *g,
                             size_t peaks,
                             size_t j_max,
                             double grid_resolution_deg,
                             struct AeEchoList **out);

enum AeStatus ae_rdrir_echoes(const struct AeRdrir *r,
                              size_t peaks,
                              double grid_resolution_deg,
                              struct AeEchoList **out);

enum AeStatus ae_echo_list_len(const struct AeEchoList *list, size_t *len);

enum AeStatus ae_echo_list_get(const struct AeEchoList *list, size_t index, struct AeEcho *echo);

void ae_echo_list_free(struct AeEchoList *list);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* AMBI_ECHOES_H */
