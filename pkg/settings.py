"""
Set your file locations and scoring defaults here.

The rubric and feedback templates are data, not code. Point RUBRIC_PATH and FEEDBACK_PATH at other files to score a
different item against a different learning progression.
Run configuration (classifier, SMOTE, seeds) lives in RUN_CONFIG_PATH and can be overridden with environment
variables prefixed with ENV_PREFIX, e.g. LPSCORE_TRAIN__LEARNING_RATE=2e-5
"""

RUBRIC_PATH = r"rubric_source/electroscope_rubric.json"
FEEDBACK_PATH = r"rubric_source/electroscope_feedback.json"
RUN_CONFIG_PATH = r"rubric_source/run_config.yaml"

OUTPUT_FOLDER = r"output"

"""
Thresholds used when reporting. ALPHA_THRESHOLD is compared strictly (alpha must be greater than it to pass).
"""
ALPHA_THRESHOLD = 0.8
CONFIDENCE = 0.95
BOOTSTRAP_RESAMPLES = 2000

DEFAULT_SEED = 1211

"""
You shouldn't need to change the following unless you are making changes to the script
"""
TOOL_VERSION = "1.0.0"
MODEL_FORMAT_VERSION = 1
ENV_PREFIX = "LPSCORE_"
MANIFEST_SUFFIX = ".manifest.json"
SYNTHETIC_ID_PREFIX = "synthetic-"
RESPONSE_ID_COLUMN = "response_id"
EXPLANATION_COLUMN = "explanation"
CATEGORY_COLUMN_PREFIX = "c"
