/*
 * chase-seg: semi-supervised multi-phase segmentation toolkit
 *
 * Copyright 2026 The chase-seg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the chase-seg core. Every function returns a chase_status;
 * on failure chase_last_error() describes the problem for the calling
 * thread. Handles are opaque and released with the matching *_free. */

#ifndef CHASE_CHASE_H
#define CHASE_CHASE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CHASE_API __declspec(dllexport)
#else
#define CHASE_API __attribute__((visibility("default")))
#endif

typedef enum chase_status {
  CHASE_OK = 0,
  CHASE_ERR_INVALID_ARGUMENT = 1, /* null handle or out-of-range argument */
  CHASE_ERR_CONTRACT = 2,         /* violated precondition (shapes, missing phases) */
  CHASE_ERR_CONFIG = 3,
  CHASE_ERR_IO = 4,
  CHASE_ERR_DIVERGENCE = 5, /* non-finite loss during training */
  CHASE_ERR_INTERNAL = 6
} chase_status;

CHASE_API const char* chase_version(void);
/* Message for the most recent failure on this thread ("" if none). */
CHASE_API const char* chase_last_error(void);

/* Progress lines from long-running calls; pass NULL to silence. */
typedef void (*chase_log_fn)(const char* line, void* user);
CHASE_API void chase_set_log(chase_log_fn fn, void* user);

/* ---- configuration ---- */

typedef struct chase_config chase_config;

CHASE_API chase_status chase_config_new(chase_config** out);
CHASE_API chase_status chase_config_load(const char* path, chase_config** out);
CHASE_API chase_status chase_config_set(chase_config* cfg, const char* key, const char* value);
/* Seeds data generation and training. */
CHASE_API chase_status chase_config_set_seed(chase_config* cfg, uint64_t seed);
/* Copies the full key = value listing into buf (NUL-terminated). *needed
 * receives the required size including the terminator. */
CHASE_API chase_status chase_config_text(const chase_config* cfg, char* buf, size_t cap, size_t* needed);
CHASE_API void chase_config_free(chase_config* cfg);

/* ---- pipeline ---- */

/* Synthetic studies and manifest.tsv under data_dir. */
CHASE_API chase_status chase_generate_data(const chase_config* cfg, const char* data_dir);

/* Supervised venous-phase pretraining; writes run_dir/pretrained.ckpt. */
CHASE_API chase_status chase_pretrain(const chase_config* cfg, const char* data_dir, const char* run_dir);

/* Joint training from a pretrained checkpoint; writes run_dir/chase.ckpt. */
CHASE_API chase_status chase_train(const chase_config* cfg, const char* data_dir,
                                   const char* pretrained_ckpt, const char* run_dir);

/* Pseudo-label holes dataset (manifest.tsv + masks) under holes_dir. */
CHASE_API chase_status chase_build_holes(const chase_config* cfg, const char* data_dir,
                                         const char* ckpt, const char* holes_dir);

/* Holes finetune from a joint checkpoint; writes run_dir/finetuned.ckpt. */
CHASE_API chase_status chase_finetune(const chase_config* cfg, const char* data_dir,
                                      const char* ckpt, const char* holes_dir, const char* run_dir);

/* Evaluates a checkpoint on the target test split. mode is one of
 * "single-phase", "all-available", "all-15-combos" or a combo such as
 * "NC+V". Writes metrics.csv, summary.csv, box.csv and summary.txt. */
CHASE_API chase_status chase_evaluate(const char* data_dir, const char* ckpt, const char* mode,
                                      const char* out_dir);

/* Merges metrics.csv files from eval_dirs into out_dir (same four outputs). */
CHASE_API chase_status chase_report(const char* const* eval_dirs, size_t count, const char* out_dir);

/* Full synthetic benchmark into out_dir, including benchmark.csv. */
CHASE_API chase_status chase_run_benchmark(const chase_config* cfg, const char* out_dir);

/* ---- volumes ---- */

typedef struct chase_volume chase_volume;

typedef enum chase_dtype { CHASE_FLOAT32 = 0, CHASE_UINT8 = 1 } chase_dtype;

CHASE_API chase_status chase_volume_read(const char* path, chase_volume** out);
CHASE_API chase_status chase_volume_write(const chase_volume* vol, const char* path);
/* Copies data (d*h*w elements of the given dtype). spacing is z, y, x. */
CHASE_API chase_status chase_volume_new(chase_dtype dtype, int d, int h, int w, const double spacing[3],
                                        const void* data, chase_volume** out);
CHASE_API chase_status chase_volume_info(const chase_volume* vol, chase_dtype* dtype, int shape[3],
                                         double spacing[3]);
/* Borrowed pointer valid until the volume is freed. */
CHASE_API const void* chase_volume_data(const chase_volume* vol);
CHASE_API void chase_volume_free(chase_volume* vol);

/* ---- metrics and holes on raw binary masks (nonzero = foreground) ---- */

CHASE_API chase_status chase_dsc(const uint8_t* pred, const uint8_t* gt, int d, int h, int w, double* out);
/* *defined is 0 (and *out untouched) when either mask is empty. */
CHASE_API chase_status chase_assd(const uint8_t* pred, const uint8_t* gt, int d, int h, int w,
                                  const double spacing[3], double* out, int* defined);
CHASE_API chase_status chase_extract_holes(const uint8_t* region, int d, int h, int w, int min_size,
                                           uint8_t* holes_out);

/* ---- models ---- */

typedef struct chase_model chase_model;

typedef enum chase_model_kind { CHASE_MODEL_PHNN = 0, CHASE_MODEL_COHETERO = 1 } chase_model_kind;

CHASE_API chase_status chase_model_load(const char* path, chase_model** out);
CHASE_API chase_status chase_model_kind_of(const chase_model* model, chase_model_kind* kind);
/* phases[i] is the NC, A, V, D float32 volume or NULL. combo names the
 * phases to use ("all" for every non-NULL one). labels_out holds d*h*w
 * values in {0, 1, 2}. Single-phase models vote across the combo. */
CHASE_API chase_status chase_model_predict(const chase_model* model, const chase_volume* const phases[4],
                                           const char* combo, uint8_t* labels_out);
CHASE_API void chase_model_free(chase_model* model);

#ifdef __cplusplus
}
#endif

#endif /* CHASE_CHASE_H */
