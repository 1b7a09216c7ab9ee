#ifndef REVCHAIN_H
#define REVCHAIN_H

/* Generated by cbindgen from revchain-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Zero is success.
 */
typedef enum RcStatus {
  RcOk = 0,
  RcNullArgument = 1,
  RcInvalidUtf8 = 2,
  RcIo = 3,
  RcParse = 4,
  RcLookup = 5,
  RcConflict = 6,
  RcState = 7,
  RcDeadline = 8,
  RcInsufficientReviewers = 9,
  RcParameter = 10,
  RcConfig = 11,
  RcInternal = 12,
} RcStatus;

/**
 * Opaque handle: a locked state directory plus the replayed engine.
 */
typedef struct RcEngine RcEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rc_version(void);

/**
 * Message for the calling thread's most recent failure. Empty string when
 * the last call succeeded. Valid until this thread's next call.
 */
const char *rc_last_error(void);

/**
 * Create a state directory with a fresh chain at `difficulty` leading zero
 * hex digits, then open it. The new handle is written to `out`.
 */
enum RcStatus rc_engine_init(const char *state_dir, uint8_t difficulty, struct RcEngine **out);

/**
 * Open an existing state directory. The new handle is written to `out`.
 */
enum RcStatus rc_engine_open(const char *state_dir, struct RcEngine **out);

/**
 * Release a handle and its directory lock. NULL is a no-op.
 */
void rc_engine_close(struct RcEngine *engine);

/**
 * Ingest a corpus JSON file. Each count pointer may be NULL.
 */
enum RcStatus rc_engine_ingest(struct RcEngine *engine,
                               const char *corpus_path,
                               size_t *persons_added,
                               size_t *articles_added,
                               size_t *records_rejected);

/**
 * Open a review case for an ingested article.
 */
enum RcStatus rc_engine_submit(struct RcEngine *engine, const char *article_id);

/**
 * Screen a submitted case. Nonzero `proceed` sends the invitation batch;
 * zero desk-rejects.
 */
enum RcStatus rc_engine_screen(struct RcEngine *engine, const char *article_id, bool proceed);

/**
 * Record a reviewer's answer. Nonzero `accept` accepts; zero declines.
 */
enum RcStatus rc_engine_respond(struct RcEngine *engine, const char *invitation_id, bool accept);

/**
 * File a review report. `recommendation` is one of "accept",
 * "minor_revise", "major_revise", "reject".
 */
enum RcStatus rc_engine_report(struct RcEngine *engine,
                               const char *invitation_id,
                               const char *recommendation);

/**
 * Record the editorial verdict. `verdict` is one of "accept", "revise",
 * "reject".
 */
enum RcStatus rc_engine_decide(struct RcEngine *engine,
                               const char *article_id,
                               const char *verdict);

/**
 * Advance the simulated clock by `advance_ms` and expire lapsed
 * invitations and reports. Each count pointer may be NULL.
 */
enum RcStatus rc_engine_tick(struct RcEngine *engine,
                             uint64_t advance_ms,
                             size_t *invitations_expired,
                             size_t *reports_overdue,
                             size_t *replacements_sent);

/**
 * Current simulated clock in ms. Returns 0 on a NULL handle.
 */
uint64_t rc_engine_clock_ms(const struct RcEngine *engine);

/**
 * Move the simulated clock to an absolute time. Only forward moves are
 * allowed.
 */
enum RcStatus rc_engine_set_clock_ms(struct RcEngine *engine, uint64_t now_ms);

/**
 * Number of blocks in the chain, genesis included. 0 on a NULL handle.
 */
uint64_t rc_engine_chain_length(const struct RcEngine *engine);

/**
 * Re-verify every block. `RcOk` means the chain is intact.
 */
enum RcStatus rc_engine_validate(const struct RcEngine *engine);

/**
 * Write the case status name ("InReview", "Accepted", ...) for an article
 * into `buf` (NUL-terminated). `buf_len` is the buffer size in bytes.
 */
enum RcStatus rc_engine_case_status(const struct RcEngine *engine,
                                    const char *article_id,
                                    char *buf,
                                    size_t buf_len);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* REVCHAIN_H */
