/*
 * Copyright 2026 The MAM Speech Authors.
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

/*
 * C interface to the masked-acoustic-model toolkit.
 *
 * Every call returns a mam_status. On failure, mam_last_error() holds a
 * message for the calling thread until its next call into the library.
 * Config structs must be initialised with their *_default() function
 * before fields are overridden. String fields may be NULL where noted.
 */

#ifndef MAM_MAM_H_
#define MAM_MAM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MAM_API __declspec(dllexport)
#else
#define MAM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mam_status {
  MAM_OK = 0,
  MAM_ERR_ARGUMENT = 1,  /* NULL pointer, unknown name, bad range */
  MAM_ERR_DIMENSION = 2, /* shape mismatch */
  MAM_ERR_CONTRACT = 3,  /* precondition violated (empty corpus, ...) */
  MAM_ERR_NUMERIC = 4,   /* NaN / Inf */
  MAM_ERR_IO = 5,        /* missing or unwritable file */
  MAM_ERR_FORMAT = 6,    /* corrupt or unsupported file */
  MAM_ERR_INTERNAL = 7
} mam_status;

MAM_API const char* mam_last_error(void);
MAM_API const char* mam_status_string(mam_status status);
MAM_API const char* mam_version(void);

/* ---- features ---------------------------------------------------------- */

typedef struct mam_feature_config {
  int n_fft;        /* 400 */
  double window_ms; /* 25 */
  double hop_ms;    /* 10 */
  int n_mels;       /* 160 */
  int cmvn;         /* 1 */
  int with_linear;  /* 0; also cache log-linear spectrograms */
} mam_feature_config;

MAM_API void mam_feature_config_default(mam_feature_config* cfg);

/* Builds <cache_dir>/{mel,linear}/<id>.mamf and manifest.txt from the WAV
 * files in wav_dir. Existing valid entries are skipped. */
MAM_API mam_status mam_features_from_dir(const char* wav_dir, const char* cache_dir, const mam_feature_config* cfg,
                                         size_t* written, size_t* skipped);

/* ---- synthetic corpus -------------------------------------------------- */

typedef struct mam_synth_config {
  size_t utterances; /* 50 */
  int phones;        /* 8 */
  int speakers;      /* 4 */
  double min_seconds;
  double max_seconds;
  double noise;
  int transition_frames; /* envelope glide at segment starts */
  double formant_offset_hz; /* per-speaker formant shift range */
  uint64_t seed;
  int write_wav;         /* 1: <out_dir>/wav/<id>.wav */
  const char* cache_dir; /* NULL: no feature cache */
} mam_synth_config;

MAM_API void mam_synth_config_default(mam_synth_config* cfg);

/* Writes frame_labels.csv and utt_labels.csv (and optionally WAVs and a
 * feature cache built with default feature settings). */
MAM_API mam_status mam_synth_corpus(const mam_synth_config* cfg, const char* out_dir);

/* ---- model ------------------------------------------------------------- */

/* Encoder shape. Zero / NULL fields keep the preset's value. */
typedef struct mam_encoder_config {
  const char* preset; /* "base", "large" or "tiny" */
  size_t hidden_dim;
  size_t ff_dim;
  size_t heads;
  size_t layers;
  int downsample;
  int consecutive;
  double dropout; /* < 0 keeps the preset */
  size_t max_steps;
} mam_encoder_config;

MAM_API void mam_encoder_config_default(mam_encoder_config* cfg);

typedef struct mam_model mam_model;

typedef struct mam_model_info {
  size_t hidden_dim;
  size_t ff_dim;
  size_t heads;
  size_t layers;
  size_t input_dim;
  size_t target_dim;
  int downsample;
  int consecutive;
  uint64_t encoder_parameters;
} mam_model_info;

/* Applies the preset and overrides for the given feature widths without
 * allocating weights. */
MAM_API mam_status mam_resolve_encoder(const mam_encoder_config* cfg, size_t mel_dim, size_t linear_dim,
                                       mam_model_info* out);

/* Encoder parameter count for a config, without allocating weights. */
MAM_API mam_status mam_count_parameters(const mam_encoder_config* cfg, uint64_t* out);

MAM_API mam_status mam_model_create(const mam_encoder_config* cfg, uint64_t seed, mam_model** out);
MAM_API mam_status mam_model_load(const char* checkpoint_path, mam_model** out);
MAM_API mam_status mam_model_save(const mam_model* model, const char* checkpoint_path);
MAM_API void mam_model_free(mam_model* model);
MAM_API mam_status mam_model_info_get(const mam_model* model, mam_model_info* out);

/* Eval-mode forward pass of one utterance. frames is steps x input_dim
 * (already stacked). out receives layers x steps x hidden_dim floats;
 * out_len must be at least that. */
MAM_API mam_status mam_model_encode(const mam_model* model, const float* frames, size_t steps, size_t input_dim,
                                    float* out, size_t out_len);

/* ---- schedule ---------------------------------------------------------- */

MAM_API mam_status mam_lr_at(uint64_t step, uint64_t total_steps, double warmup_fraction, double peak_lr,
                             double* out);

/* ---- pre-training ------------------------------------------------------ */

typedef struct mam_pretrain_config {
  const char* cache_dir;
  const char* out_dir; /* checkpoints, loss.csv */
  mam_encoder_config encoder;
  double mask_proportion; /* 0.15 */
  uint64_t total_steps;   /* 500000 */
  double warmup_fraction; /* 0.07 */
  double peak_lr;         /* 4e-4 */
  size_t batch_size;      /* 6 */
  double clip_norm;       /* 1.0; 0 disables */
  uint64_t checkpoint_every;
  uint64_t stop_after; /* 0: run to total_steps */
  uint64_t seed;
  const char* resume_from; /* NULL: fresh start */
  int verbose;             /* print progress to stderr */
} mam_pretrain_config;

MAM_API void mam_pretrain_config_default(mam_pretrain_config* cfg);

typedef struct mam_train_summary {
  uint64_t steps;
  double first_loss;
  double last_loss;
} mam_train_summary;

MAM_API mam_status mam_pretrain(const mam_pretrain_config* cfg, mam_train_summary* summary);

/* ---- extraction -------------------------------------------------------- */

typedef struct mam_extract_config {
  const char* cache_dir;
  const char* checkpoint;
  const char* out_dir;
  const char* mode;       /* "last" or "weighted" */
  const char* mixer_path; /* weighted mode; NULL = uniform weights */
} mam_extract_config;

MAM_API void mam_extract_config_default(mam_extract_config* cfg);

/* *uniform_mixer is set to 1 when weighted mode fell back to uniform
 * weights because no trained mixer was given. */
MAM_API mam_status mam_extract(const mam_extract_config* cfg, size_t* written, int* uniform_mixer);

/* ---- probes and fine-tuning -------------------------------------------- */

typedef struct mam_probe_config {
  const char* cache_dir;
  const char* checkpoint; /* required for repr inputs */
  const char* input;      /* "mel", "repr-last", "repr-weighted" */
  const char* task;       /* "frame" or "utterance" */
  const char* labels;     /* CSV matching the task */
  int num_classes;        /* 0: infer */
  const double* budgets;  /* frame task; NULL = {1.0} */
  size_t num_budgets;
  double lr;
  size_t max_epochs;
  size_t patience;
  size_t rnn_hidden;
  const char* readout; /* "last" or "mean" */
  uint64_t seed;
  const char* report_csv; /* appended; NULL skips */
  const char* table_path; /* sweep table; NULL skips */
  const char* mixer_out;  /* repr-weighted: trained mixer checkpoint */
} mam_probe_config;

MAM_API void mam_probe_config_default(mam_probe_config* cfg);

/* accuracies receives one value per budget (one for the utterance task). */
MAM_API mam_status mam_probe(const mam_probe_config* cfg, double* accuracies, size_t accuracies_len);

typedef struct mam_finetune_config {
  const char* cache_dir;
  const char* checkpoint;
  const char* out_checkpoint; /* NULL skips */
  const char* task;
  const char* labels;
  int num_classes;
  double budget;
  size_t epochs;           /* 2 */
  double peak_lr;          /* 4e-3 */
  double warmup_fraction;  /* 0.07 */
  size_t batch_size;       /* 6 */
  double encoder_lr_scale; /* 1; 0 freezes the encoder */
  size_t rnn_hidden;
  const char* readout;
  uint64_t seed;
  const char* report_csv;
  const char* log_csv; /* step,lr,loss,grad_norm */
} mam_finetune_config;

MAM_API void mam_finetune_config_default(mam_finetune_config* cfg);

typedef struct mam_finetune_summary {
  double accuracy;
  uint64_t steps;
} mam_finetune_summary;

MAM_API mam_status mam_finetune(const mam_finetune_config* cfg, mam_finetune_summary* summary);

#ifdef __cplusplus
}
#endif

#endif /* MAM_MAM_H_ */
