#ifndef CLOCKLAB_H
#define CLOCKLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CLK_STATUS_OK = 0,
  CLK_STATUS_INVALID_ARGUMENT = 1,
  CLK_STATUS_NULL_POINTER = 2,
  CLK_STATUS_MEASUREMENT_FAILED = 3,
  CLK_STATUS_PARSE = 4,
  CLK_STATUS_IO = 5,
  CLK_STATUS_CHECKPOINT = 6,
  CLK_STATUS_BUFFER_TOO_SMALL = 7,
  CLK_STATUS_PANIC = 8,
} ClkStatus;

/**
 * Opaque LSTM predictor.
 */
typedef struct ClkLstm ClkLstm;

typedef struct {
  size_t fft_size;
  size_t upsample_factor;
  double peak_threshold;
  double f_sine_nom;
  double f_s_nom;
  bool include_carrier_offset;
  double f_carrier_nom;
} ClkEstimatorConfig;

typedef struct {
  double lr;
  size_t n_initial;
  size_t n_online;
  size_t dt_online_min;
  size_t batch_size;
  uint64_t seed;
} ClkTrainPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next clocklab call on the same thread.
 */
const char *clk_last_error(void);

/**
 * # Safety
 * `out_ppm` must be valid for a write.
 */
ClkStatus clk_ppm_of(double f_x, double f_x_nom, double *out_ppm);

/**
 * # Safety
 * `out_hz` must be valid for a write.
 */
ClkStatus clk_freq_of(double ppm_value, double f_nom, double *out_hz);

/**
 * Offset in µs accrued over `dt_s` seconds at a constant residual.
 *
 * # Safety
 * `out_us` must be valid for a write.
 */
ClkStatus clk_offset_step(double residual_ppm, double dt_s, double *out_us);

/**
 * Per-minute offsets in µs, reset every `resync_period` minutes.
 *
 * # Safety
 * `residuals_ppm` must point to `n` readable doubles and `out_us` to
 * `out_len` writable doubles.
 */
ClkStatus clk_integrate_offsets(const double *residuals_ppm,
                                size_t n,
                                size_t resync_period,
                                double *out_us,
                                size_t out_len);

ClkEstimatorConfig clk_estimator_config_default(void);

/**
 * Skew from a capture of the reference tone. `iq` holds `n_samples`
 * interleaved I/Q pairs.
 *
 * # Safety
 * `iq` must point to `2 * n_samples` readable floats, `cfg` to a config and
 * `out_ppm` must be valid for a write.
 */
ClkStatus clk_estimate_tone_ppm(const float *iq,
                                size_t n_samples,
                                const ClkEstimatorConfig *cfg,
                                double *out_ppm);

/**
 * Skew from a capture of the PSS train with the given root index.
 *
 * # Safety
 * As for [`clk_estimate_tone_ppm`]; `out_degraded` may be null.
 */
ClkStatus clk_estimate_lte_ppm(const float *iq,
                               size_t n_samples,
                               uint32_t pss_root,
                               const ClkEstimatorConfig *cfg,
                               double *out_ppm,
                               bool *out_degraded);

ClkTrainPolicy clk_train_policy_default(void);

/**
 * New untrained model with linear time encoding.
 *
 * # Safety
 * `out_model` must be valid for a write.
 */
ClkStatus clk_lstm_new(size_t hidden_size, size_t seq_len, uint64_t seed, ClkLstm **out_model);

/**
 * # Safety
 * `model` must come from [`clk_lstm_new`] or [`clk_lstm_load`] and not have
 * been freed. Null is ignored.
 */
void clk_lstm_free(ClkLstm *model);

/**
 * Window length the model expects.
 *
 * # Safety
 * `model` must be a live handle and `out_len` valid for a write.
 */
ClkStatus clk_lstm_seq_len(ClkLstm *model, size_t *out_len);

/**
 * Initial fit on `n` consecutive minutes.
 *
 * # Safety
 * `model` must be a live handle; the three arrays must each hold `n`
 * doubles; `policy` must be valid.
 */
ClkStatus clk_lstm_train_initial(ClkLstm *model,
                                 const double *temperature_c,
                                 const double *seconds_of_day,
                                 const double *target_ppm,
                                 size_t n,
                                 const ClkTrainPolicy *policy);

/**
 * Online update on newly labelled minutes; leading NaN targets only supply
 * history. Writes the number of windows trained on to `out_windows` when it
 * is not null.
 *
 * # Safety
 * As for [`clk_lstm_train_initial`].
 */
ClkStatus clk_lstm_online_update(ClkLstm *model,
                                 const double *temperature_c,
                                 const double *seconds_of_day,
                                 const double *target_ppm,
                                 size_t n,
                                 const ClkTrainPolicy *policy,
                                 size_t *out_windows);

/**
 * ppm predicted for the last minute of a window of `n == seq_len` minutes.
 *
 * # Safety
 * `model` must be a live handle; both arrays must hold `n` doubles.
 */
ClkStatus clk_lstm_predict(ClkLstm *model,
                           const double *temperature_c,
                           const double *seconds_of_day,
                           size_t n,
                           double *out_ppm);

/**
 * # Safety
 * `model` must be a live handle and `path_utf8` a NUL-terminated UTF-8 string.
 */
ClkStatus clk_lstm_save(ClkLstm *model, const char *path_utf8);

/**
 * # Safety
 * `path_utf8` must be a NUL-terminated UTF-8 string and `out_model` valid for a
 * write. On failure `*out_model` is set to null.
 */
ClkStatus clk_lstm_load(const char *path_utf8, ClkLstm **out_model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLOCKLAB_H */
