#ifndef SWARMPLAN_H
#define SWARMPLAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_ARGUMENT = 2,
  SP_STATUS_INVALID_CONFIG = 3,
  SP_STATUS_GENERATION = 4,
  SP_STATUS_IO = 5,
  SP_STATUS_PARSE = 6,
  SP_STATUS_NUMERIC = 7,
  SP_STATUS_PANIC = 8,
} SpStatus;

/**
 * Map size preset.
 */
typedef enum SpScale {
  /**
   * 32 cells per side.
   */
  SP_SCALE_DESK = 0,
  /**
   * 64 cells per side.
   */
  SP_SCALE_PAPER = 1,
} SpScale;

/**
 * A finished episode with its trajectory.
 */
typedef struct SpEpisode SpEpisode;

/**
 * A generated world.
 */
typedef struct SpMap SpMap;

/**
 * Headline numbers of one episode.
 */
typedef struct SpMetrics {
  uint64_t elapsed_ms;
  uint64_t expanded_nodes;
  double cost;
  uint64_t ticks;
  uint32_t targets;
  uint32_t captured;
  bool budget_exhausted;
  uint64_t plans;
  uint64_t fallbacks;
} SpMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *sp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sp_version(void);

/**
 * Build map `map_id` (1..=5) at the given scale.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SpStatus sp_map_build(uint8_t map_id, enum SpScale scale, uint64_t seed, struct SpMap **out);

/**
 * # Safety
 * `map` must come from [`sp_map_build`] and not be used afterwards. Null is ignored.
 */
void sp_map_free(struct SpMap *map);

/**
 * Grid size in cells along x, y and z.
 *
 * # Safety
 * `map` must be a live handle and `dims` must point to three writable values.
 */
enum SpStatus sp_map_dims(const struct SpMap *map, uint64_t *dims);

/**
 * Whether a cell is statically occupied. Cells outside the grid count as occupied.
 *
 * # Safety
 * `map` must be a live handle and `occupied` writable.
 */
enum SpStatus sp_map_is_static(const struct SpMap *map,
                               int64_t x,
                               int64_t y,
                               int64_t z,
                               bool *occupied);

/**
 * Share of cells that are statically occupied.
 *
 * # Safety
 * `map` must be a live handle.
 */
double sp_map_static_fraction(const struct SpMap *map);

/**
 * Number of goals on the map.
 *
 * # Safety
 * `map` must be a live handle.
 */
uint32_t sp_map_target_count(const struct SpMap *map);

/**
 * Run one episode with the default planner settings and the tick clock.
 * `algo` is one of GSO, hGSO, IWO, hIWO, BBO, hBBO (case-insensitive).
 *
 * # Safety
 * `algo` must be a NUL-terminated string and `out` writable.
 */
enum SpStatus sp_episode_run(uint8_t map_id,
                             enum SpScale scale,
                             const char *algo,
                             uint64_t seed,
                             struct SpEpisode **out);

/**
 * # Safety
 * `ep` must come from [`sp_episode_run`] and not be used afterwards. Null is ignored.
 */
void sp_episode_free(struct SpEpisode *ep);

/**
 * # Safety
 * `ep` must be a live handle and `out` writable.
 */
enum SpStatus sp_episode_metrics(const struct SpEpisode *ep, struct SpMetrics *out);

/**
 * Number of logged ticks, including tick 0.
 *
 * # Safety
 * `ep` must be a live handle.
 */
uint64_t sp_episode_tick_count(const struct SpEpisode *ep);

/**
 * Robot position at logged tick `index`.
 *
 * # Safety
 * `ep` must be a live handle and `xyz` must point to three writable values.
 */
enum SpStatus sp_episode_position(const struct SpEpisode *ep, uint64_t index, double *xyz);

/**
 * Re-simulate the world and count ticks where the robot was in an occupied cell.
 *
 * # Safety
 * `ep` must be a live handle and `violations` writable.
 */
enum SpStatus sp_episode_replay(const struct SpEpisode *ep, uint64_t *violations);

/**
 * Write the episode's trajectory log to `path`.
 *
 * # Safety
 * `ep` must be a live handle and `path` a NUL-terminated string.
 */
enum SpStatus sp_episode_write_log(const struct SpEpisode *ep, const char *path);

/**
 * Run an experiment spec file and write its tables to `out_dir`.
 * `episodes` receives the number of episodes run and may be null.
 *
 * # Safety
 * `spec_path` and `out_dir` must be NUL-terminated strings.
 */
enum SpStatus sp_experiment_run(const char *spec_path, const char *out_dir, uint64_t *episodes);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWARMPLAN_H */
