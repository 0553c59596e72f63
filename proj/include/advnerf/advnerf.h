#ifndef ADVNERF_H
#define ADVNERF_H

/* C interface to the adversarially-augmented radiance field library.
 *
 * All entry points return anf_status; on failure a human-readable message is
 * available from anf_last_error() (thread-local). Objects are opaque handles
 * released with their _free function. Configuration travels as JSON text;
 * see the README for the schema.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum anf_status {
  ANF_OK = 0,
  ANF_ERR_INVALID_ARGUMENT = 1,
  ANF_ERR_IO = 2,
  ANF_ERR_BAD_FORMAT = 3,
  ANF_ERR_NUMERIC = 4,
  ANF_ERR_INTERNAL = 5
} anf_status;

const char* anf_status_name(anf_status status);

/* Message from the most recent failing call on this thread ("" if none). */
const char* anf_last_error(void);

/* Library version, e.g. "0.1.0". */
const char* anf_version(void);

typedef struct anf_scene anf_scene;
typedef struct anf_field anf_field;

/* --- scenes --------------------------------------------------------------- */

/* Loads the transforms-JSON + PNG layout from a directory.
 * options_json (may be NULL): {"background":[r,g,b], "near":..., "far":...,
 * "downsample": n}. */
anf_status anf_scene_load(const char* dir, const char* options_json, anf_scene** out);

/* Generates a procedural toy scene. spec_json (may be NULL for defaults):
 * {"kind":"sphere|box|blobs|spherebox", "train_views":8, "test_views":4,
 *  "resolution":64, "oracle_samples":512, ...}. */
anf_status anf_scene_generate_toy(const char* spec_json, uint64_t seed, anf_scene** out);

anf_status anf_scene_save(const anf_scene* scene, const char* dir);

/* Corrupted copy of the training images; kind is gaussian|shot|pepper,
 * severity 0..5 (0 = identity). */
anf_status anf_scene_corrupt(const anf_scene* scene, const char* kind, int severity, uint64_t seed,
                             anf_scene** out);

/* JSON summary (view counts, resolution, bounds) into buf. */
anf_status anf_scene_info(const anf_scene* scene, char* buf, size_t bufsize);

void anf_scene_free(anf_scene* scene);

/* --- fields ---------------------------------------------------------------- */

anf_status anf_field_load(const char* checkpoint_path, anf_field** out);
void anf_field_free(anf_field* field);

/* --- pipeline --------------------------------------------------------------- */

/* Trains on the scene; config_json holds the train/field/attack blocks (NULL
 * for defaults). Writes checkpoint.json and log.csv under out_dir. The
 * trained field is returned through out_field when non-NULL. */
anf_status anf_train(const anf_scene* scene, const char* config_json, const char* out_dir,
                     anf_field** out_field);

/* Renders every camera of a split ("train"|"test") to out_dir: color PNG,
 * 16-bit depth PNG and a raw float32 depth sidecar per view. */
anf_status anf_render(const anf_field* field, const anf_scene* scene, const char* split,
                      const char* config_json, const char* out_dir);

/* Per-view and mean PSNR/SSIM/average against a split, written as CSV; the
 * summary row is also returned as JSON in report_buf when non-NULL. */
anf_status anf_eval(const anf_field* field, const anf_scene* scene, const char* split,
                    const char* config_json, const char* out_csv, char* report_buf, size_t bufsize);

/* Density lattice -> marching cubes -> OBJ. Also writes the raw volume next
 * to the OBJ when export_volume is nonzero. */
anf_status anf_export_mesh(const anf_field* field, int resolution, double threshold,
                           const char* out_obj, int export_volume);

#ifdef __cplusplus
}
#endif

#endif /* ADVNERF_H */
