#ifndef FEDSTL_FEDSTL_H
#define FEDSTL_FEDSTL_H

/* C interface to the fedstl library. Every fallible call returns a status;
 * on failure fedstl_last_error() describes the problem for the calling
 * thread until its next fallible call. Strings returned through char** are
 * owned by the caller and released with fedstl_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(FEDSTL_BUILDING_LIBRARY)
#define FEDSTL_API __attribute__((visibility("default")))
#else
#define FEDSTL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fedstl_status {
  FEDSTL_OK = 0,
  FEDSTL_ERR_PARSE = 1,
  FEDSTL_ERR_RANGE = 2,
  FEDSTL_ERR_SHAPE = 3,
  FEDSTL_ERR_MINING = 4,
  FEDSTL_ERR_INFEASIBLE = 5,
  FEDSTL_ERR_UNSUPPORTED = 6,
  FEDSTL_ERR_CONFIG = 7,
  FEDSTL_ERR_IO = 8,
  FEDSTL_ERR_NUMERIC = 9,
  FEDSTL_ERR_ARGUMENT = 10, /* null handle or output pointer */
  FEDSTL_ERR_INTERNAL = 11
} fedstl_status;

typedef struct fedstl_formula fedstl_formula;
typedef struct fedstl_trace fedstl_trace;
typedef struct fedstl_config fedstl_config;

FEDSTL_API const char* fedstl_last_error(void);
FEDSTL_API const char* fedstl_status_name(fedstl_status status);
FEDSTL_API void fedstl_string_free(char* s);

/* 0 = trace, 1 = debug, 2 = info, 3 = warn, 4 = error, 6 = off. Log lines go
 * to stderr. */
FEDSTL_API void fedstl_set_log_level(int level);

/* Formulas */
FEDSTL_API fedstl_status fedstl_formula_parse(const char* text, fedstl_formula** out);
/* Property file: comment lines starting with '#' are skipped, the remaining
 * lines are conjoined. */
FEDSTL_API fedstl_status fedstl_formula_load(const char* path, fedstl_formula** out);
FEDSTL_API fedstl_status fedstl_formula_render(const fedstl_formula* f, char** out);
FEDSTL_API void fedstl_formula_free(fedstl_formula* f);

/* Traces. `data` is row-major, length rows of n_vars values. */
FEDSTL_API fedstl_status fedstl_trace_create(const char* const* names, size_t n_vars,
                                             const double* data, size_t length,
                                             fedstl_trace** out);
FEDSTL_API fedstl_status fedstl_trace_load_csv(const char* path, fedstl_trace** out);
FEDSTL_API size_t fedstl_trace_length(const fedstl_trace* t);
FEDSTL_API void fedstl_trace_free(fedstl_trace* t);

/* Satisfaction and robustness at step t. Robustness of `true` is +inf. */
FEDSTL_API fedstl_status fedstl_eval(const fedstl_formula* f, const fedstl_trace* t, size_t step,
                                     int* satisfied, double* robustness);

/* Mines template `row` on one trace. window_len 0 uses one window spanning
 * the trace; tol <= 0 uses the default tolerance. eps is the minimum
 * robustness of the mined formula over the trace. */
FEDSTL_API fedstl_status fedstl_mine(int row, const fedstl_trace* t, double tol, int window_len,
                                     char** formula, double* eps);

/* Run configuration: flat "key = value" text. */
FEDSTL_API fedstl_status fedstl_config_default(fedstl_config** out);
FEDSTL_API fedstl_status fedstl_config_load(const char* path, fedstl_config** out);
FEDSTL_API fedstl_status fedstl_config_set(fedstl_config* c, const char* key, const char* value);
FEDSTL_API fedstl_status fedstl_config_validate(const fedstl_config* c);
/* Canonical key = value listing. */
FEDSTL_API fedstl_status fedstl_config_render(const fedstl_config* c, char** out);
FEDSTL_API void fedstl_config_free(fedstl_config* c);

/* Runs training; the report JSON is returned and, when write_files is
 * nonzero, also written with checkpoints under the config's out_dir. */
FEDSTL_API fedstl_status fedstl_train(const fedstl_config* c, int write_files, char** report_json);

/* Timing table. rows == NULL takes the config's template rows; n_rows == 0
 * with a non-null rows gives an empty table. */
FEDSTL_API fedstl_status fedstl_bench(const fedstl_config* c, const int* rows, size_t n_rows,
                                      char** table);

#ifdef __cplusplus
}
#endif

#endif
