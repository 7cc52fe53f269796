"""Default thresholds shared by the detector and the workload simulator.

The simulator sizes its misuse scenarios relative to these numbers, so they
live in one place. All of them are overridable through a ruleset file.
"""

HIGH_FACE_RATE_PER_MIN = 100
MANY_FACES_PER_INPUT = 50
MANY_DISTINCT_FACES_PER_DAY = 10_000
TARGET_TRACKING_PHI = 0.1
TARGET_TRACKING_MIN_CALLS = 100
BLACKLIST_MATCHES_PER_HOUR = 5
CROSS_SERVICE_MIN_FACES = 10
SELF_ANOMALY_Z = 3.0
SELF_ANOMALY_MIN_HISTORY = 24
PEER_ANOMALY_Z = 3.0
PEER_ANOMALY_MIN_PEERS = 10
INVERSION_MAX_HAMMING = 4
INVERSION_MIN_ACCOUNTS = 5
INVERSION_MIN_QUERIES = 1000

MAX_FACES_PER_IMAGE = 100
RATE_WINDOW_MS = 60_000
PROFILE_WINDOW_MS = 3_600_000
PROFILE_HISTORY = 168
DAY_MS = 86_400_000
SESSION_GAP_MS = 1_800_000
CONFIDENCE_FLOOR = 0.5
SIGMA_FLOOR_FRACTION = 0.1
SIGMA_FLOOR_MIN = 1.0

DEFAULT_BLACKLIST = frozenset({"placard", "weapon", "violence", "protest banner"})
