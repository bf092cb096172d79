#ifndef IPAE_H
#define IPAE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum IpaeStatus {
  IPAE_STATUS_OK = 0,
  IPAE_STATUS_NULL_POINTER = 1,
  IPAE_STATUS_INVALID_ARGUMENT = 2,
  IPAE_STATUS_SHAPE = 3,
  IPAE_STATUS_NUMERIC = 4,
  IPAE_STATUS_DIVERGED = 5,
  IPAE_STATUS_IO = 6,
  IPAE_STATUS_FORMAT = 7,
  IPAE_STATUS_PANIC = 8,
} IpaeStatus;

// A trained or loaded encoder/decoder pair.
typedef struct IpaeCodec IpaeCodec;

// A labeled dataset.
typedef struct IpaeDataset IpaeDataset;

// Message for the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *ipae_last_error(void);

// Library version as a static NUL-terminated string.
const char *ipae_version(void);

// Loads a JSON checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum IpaeStatus ipae_codec_load(const char *path, struct IpaeCodec **out);

// Writes `codec` as a JSON checkpoint tagged with `seed`.
//
// # Safety
// `codec` must come from this library; `path` must be NUL-terminated.
enum IpaeStatus ipae_codec_save(const struct IpaeCodec *codec, const char *path, uint64_t seed);

// # Safety
// `codec` must come from this library and not be used afterwards. Null is
// ignored.
void ipae_codec_free(struct IpaeCodec *codec);

// Input, hidden and latent widths.
//
// # Safety
// All pointers must be valid.
enum IpaeStatus ipae_codec_dims(const struct IpaeCodec *codec,
                                size_t *input_dim,
                                size_t *hidden_dim,
                                size_t *latent_dim);

// Encodes `n` rows of `x` (`n × input_dim`) into posterior means and
// standard deviations (`n × latent_dim` each).
//
// # Safety
// Buffers must hold the stated number of doubles.
enum IpaeStatus ipae_codec_encode(const struct IpaeCodec *codec,
                                  const double *x,
                                  size_t n,
                                  double *mu_out,
                                  double *sigma_out);

// Decodes `n` codes (`n × latent_dim`) into `out` (`n × input_dim`).
//
// # Safety
// Buffers must hold the stated number of doubles.
enum IpaeStatus ipae_codec_decode(const struct IpaeCodec *codec,
                                  const double *z,
                                  size_t n,
                                  double *out);

// Trains a codec on `n × dim` rows with a JSON training config.
//
// On divergence the status is `Diverged` and `*out` receives the last
// finite parameters.
//
// # Safety
// `config_json` must be NUL-terminated, `x` must hold `n * dim` doubles
// and `out` must be valid.
enum IpaeStatus ipae_train(const char *config_json,
                           const double *x,
                           size_t n,
                           size_t dim,
                           struct IpaeCodec **out);

// The 25-component grid mixture drawn with `seed`.
//
// # Safety
// `out` must be valid.
enum IpaeStatus ipae_dataset_gen_gmm(uint64_t seed, struct IpaeDataset **out);

// Reads a dataset CSV.
//
// # Safety
// `path` must be NUL-terminated and `out` valid.
enum IpaeStatus ipae_dataset_load_csv(const char *path, struct IpaeDataset **out);

// # Safety
// `dataset` must come from this library and not be used afterwards. Null
// is ignored.
void ipae_dataset_free(struct IpaeDataset *dataset);

// Row count, column count and number of classes.
//
// # Safety
// All pointers must be valid.
enum IpaeStatus ipae_dataset_shape(const struct IpaeDataset *dataset,
                                   size_t *rows,
                                   size_t *cols,
                                   size_t *num_classes);

// Copies the features (`rows × cols`) and labels (`rows`). Either output
// may be null to skip it.
//
// # Safety
// Non-null buffers must hold the stated number of elements.
enum IpaeStatus ipae_dataset_copy(const struct IpaeDataset *dataset,
                                  double *x_out,
                                  uint32_t *labels_out);

// Batch-mean KL divergence from `N(mu, diag sigma^2)` to `N(0, I)`.
//
// # Safety
// `mu` and `sigma` must hold `n * dims` doubles; `out` must be valid.
enum IpaeStatus ipae_parametric_mi_bound(const double *mu,
                                         const double *sigma,
                                         size_t n,
                                         size_t dims,
                                         double *out);

// Pairwise information-potential bound.
//
// `eps` holds `n * k` noise rows of width `dims`, row `i * k + s` being
// draw `s` of sample `i`. `partners` holds `n * nj` row indices, `nj` per
// anchor.
//
// # Safety
// Buffers must hold the stated number of elements; `out` must be valid.
enum IpaeStatus ipae_ip_mi_bound(const double *mu,
                                 const double *sigma,
                                 size_t n,
                                 size_t dims,
                                 const double *eps,
                                 size_t k,
                                 const size_t *partners,
                                 size_t nj,
                                 double *out);

#endif  /* IPAE_H */
