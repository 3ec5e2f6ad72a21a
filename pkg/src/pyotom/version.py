VERSION = "0.1.0"
PROJECT_NAME = "pyotom"
PROJECT_NAME_TEXT = "PyOTOM"
AUTHOR = "PyOTOM developers"
AUTHOR_EMAIL = ""
DESCRIPTION = "PyOTOM: schedule-agnostic MTC-MRF quantification with a two-pool transient signal model and a bi-LSTM"
URL = ""
