#ifndef QFO_H
#define QFO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QfoCompileMode {
  QFO_COMPILE_MODE_QTC = 0,
  QFO_COMPILE_MODE_FUNCTIONAL = 1,
} QfoCompileMode;

/**
 * Result of every call.
 */
typedef enum QfoStatus {
  QFO_STATUS_OK = 0,
  QFO_STATUS_NULL_ARGUMENT = 1,
  QFO_STATUS_INVALID_UTF8 = 2,
  QFO_STATUS_PARSE = 3,
  QFO_STATUS_INVALID_INPUT = 4,
  QFO_STATUS_CAPACITY = 5,
  QFO_STATUS_RUNTIME = 6,
  QFO_STATUS_PANIC = 7,
} QfoStatus;

typedef enum QfoVerdict {
  QFO_VERDICT_ACCEPT = 0,
  QFO_VERDICT_REJECT = 1,
  QFO_VERDICT_UNDETERMINED = 2,
} QfoVerdict;

/**
 * A parsed formula document.
 */
typedef struct QfoFormula QfoFormula;

/**
 * A parsed quantum Turing machine.
 */
typedef struct QfoQtm QfoQtm;

/**
 * Outcome of evaluating a sentence.
 */
typedef struct QfoEvalResult {
  enum QfoVerdict verdict;
  /**
   * Probability of the final measurement, NaN when there is none.
   */
  double probability;
  size_t peak_wires;
  size_t gates;
} QfoEvalResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *qfo_last_error(void);

/**
 * Static description of a status code.
 */
const char *qfo_status_str(enum QfoStatus status);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void qfo_string_free(char *s);

/**
 * Parses a formula document (pragmas, definitions and one formula).
 *
 * # Safety
 * `src` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QfoStatus qfo_formula_parse(const char *src, struct QfoFormula **out_formula);

/**
 * # Safety
 * `f` must come from this library and not be freed twice.
 */
void qfo_formula_free(struct QfoFormula *f);

/**
 * Input length given by an `@n` pragma, or 0.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
uint64_t qfo_formula_n(const struct QfoFormula *f);

/**
 * Canonical text of the formula.
 *
 * # Safety
 * `f` must be a live handle and `out_text` a valid pointer.
 */
enum QfoStatus qfo_formula_pretty(const struct QfoFormula *f, char **out_text);

/**
 * Runs the well-formedness checker; the report text is optional.
 *
 * # Safety
 * `f` must be a live handle, `well_formed` a valid pointer and `report`
 * null or a valid pointer.
 */
enum QfoStatus qfo_formula_check(const struct QfoFormula *f, bool *well_formed, char **report);

/**
 * Evaluates the sentence on a classical input over `{0,1}`. An empty input
 * uses `n` zeros from the `@n` pragma. A zero `tolerance` keeps the default.
 *
 * # Safety
 * `f` must be a live handle, `input` a NUL-terminated string and `result`
 * a valid pointer.
 */
enum QfoStatus qfo_formula_eval(const struct QfoFormula *f,
                                const char *input,
                                double tolerance,
                                struct QfoEvalResult *result);

/**
 * Parses a `.qtm` machine description.
 *
 * # Safety
 * `src` must be a NUL-terminated string and `out_qtm` a valid pointer.
 */
enum QfoStatus qfo_qtm_parse(const char *src, struct QfoQtm **out_qtm);

/**
 * # Safety
 * `m` must come from this library and not be freed twice.
 */
void qfo_qtm_free(struct QfoQtm *m);

/**
 * Simulates for `c·ilog(n)` steps and returns the acceptance probability.
 *
 * # Safety
 * `m` must be a live handle, `input` a NUL-terminated string and
 * `probability` a valid pointer.
 */
enum QfoStatus qfo_qtm_run(const struct QfoQtm *m, const char *input, double *probability);

/**
 * Checks unitarity on the configurations reachable for this input.
 *
 * # Safety
 * `m` must be a live handle, `input` a NUL-terminated string and
 * `well_formed` a valid pointer.
 */
enum QfoStatus qfo_qtm_check(const struct QfoQtm *m, const char *input, bool *well_formed);

/**
 * Compiles the machine for inputs of length `n` into a sentence whose
 * final measurement has error bound `eps`.
 *
 * # Safety
 * `m` must be a live handle and `out_formula` a valid pointer.
 */
enum QfoStatus qfo_qtm_compile(const struct QfoQtm *m,
                               uint64_t n,
                               enum QfoCompileMode mode,
                               double eps,
                               struct QfoFormula **out_formula);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QFO_H */
