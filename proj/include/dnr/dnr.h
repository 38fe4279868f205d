/* C interface to the dnr pipeline and survival statistics.
 *
 * Conventions: matrices are row-major double arrays; every function that can
 * fail returns dnr_status and leaves a message for dnr_last_error();
 * out-parameters are written only on DNR_OK. Strings returned through
 * out-parameters are freed with dnr_string_free, handles with their
 * _destroy function. */
#ifndef DNR_H
#define DNR_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dnr_status {
  DNR_OK = 0,
  DNR_ERR_INVALID_INPUT = 1,
  DNR_ERR_NUMERIC = 2,
  DNR_ERR_IO = 3,
  DNR_ERR_INTERNAL = 4
} dnr_status;

const char* dnr_version(void);

/* Message from the last failing call on the calling thread ("" if none). */
const char* dnr_last_error(void);

void dnr_string_free(char* s);

/* Pipeline stages: synth, stain, train, cluster, describe, select,
 * evaluate, km. config_json holds the flat configuration object (or a
 * previously returned manifest, which reruns with its recorded config).
 * On success *manifest_json receives the stage manifest. */
dnr_status dnr_run_stage(const char* stage, const char* config_json,
                         char** manifest_json);

/* JSON template with every config key at its default value. */
dnr_status dnr_default_config(char** config_json);

/* Cox proportional hazards (Efron ties), fitted by Newton-Raphson.
 * x is n rows by p columns, event entries are 0 or 1. */
typedef struct dnr_cox dnr_cox;

dnr_status dnr_cox_fit(const double* x, int32_t n, int32_t p,
                       const double* time, const int32_t* event,
                       dnr_cox** out);
int32_t dnr_cox_converged(const dnr_cox* fit);
int32_t dnr_cox_singular(const dnr_cox* fit);
double dnr_cox_loglik(const dnr_cox* fit);
/* Coefficient j with its standard error (se may be NaN when singular). */
dnr_status dnr_cox_coef(const dnr_cox* fit, int32_t j, double* beta,
                        double* se);
void dnr_cox_destroy(dnr_cox* fit);

/* Kaplan-Meier product-limit curve; one point per distinct event time. */
typedef struct dnr_km dnr_km;

dnr_status dnr_km_create(const double* time, const int32_t* event, int32_t n,
                         dnr_km** out);
int32_t dnr_km_size(const dnr_km* km);
dnr_status dnr_km_point(const dnr_km* km, int32_t i, double* time,
                        double* survival, int32_t* at_risk, int32_t* events);
void dnr_km_destroy(dnr_km* km);

/* Harrell concordance; higher eta must predict earlier failure. *defined is
 * 0 when no pair is comparable (then *value is NaN). */
dnr_status dnr_c_index(const double* eta, const double* time,
                       const int32_t* event, int32_t n, double* value,
                       int32_t* defined);

/* Log-rank test across groups labeled 0..G-1. */
dnr_status dnr_log_rank(const double* time, const int32_t* event,
                        const int32_t* group, int32_t n, double* statistic,
                        int32_t* df, double* p_value);

/* Spherical k-means on unit-norm rows. assignments has n entries,
 * centroids k*d (row-major); either may be NULL if not wanted. */
dnr_status dnr_spkm_fit(const double* x, int32_t n, int32_t d, int32_t k,
                        uint64_t seed, int32_t* assignments,
                        double* centroids, double* inertia);

#ifdef __cplusplus
}
#endif

#endif /* DNR_H */
