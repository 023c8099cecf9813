//! Relational schema excerpt exported as a static DDL artifact.

pub const SCHEMA_DDL: &str = "\
CREATE TABLE video_info (
  session_id        UUID PRIMARY KEY
                    DEFAULT gen_random_uuid(),
  user_id           UUID NOT NULL
                    REFERENCES user_info(user_id),
  video_id          TEXT NOT NULL,
  video_title       TEXT,
  video_duration    INTEGER,
  timestamp_started TIMESTAMPTZ,
  timestamp_stopped TIMESTAMPTZ,
  completion_rate   FLOAT,
  device_type       TEXT,
  session_mood_pre  TEXT,
  session_mood_post TEXT
);
CREATE TABLE video_interaction_events (
  event_id           UUID PRIMARY KEY
                     DEFAULT gen_random_uuid(),
  session_id         UUID NOT NULL
                     REFERENCES video_info(session_id),
  user_id            UUID NOT NULL
                     REFERENCES user_info(user_id),
  event_type         TEXT NOT NULL,
  event_ts           TIMESTAMPTZ NOT NULL,
  video_time_seconds FLOAT,
  delta_seconds      FLOAT,
  cognitive_context_tag TEXT,
  idle_time_before   FLOAT
);
CREATE TABLE derived_feature_store (
  feature_record_id    UUID PRIMARY KEY
                       DEFAULT gen_random_uuid(),
  user_id              UUID NOT NULL
                       REFERENCES user_info(user_id),
  session_id           UUID
                       REFERENCES video_info(session_id),
  feature_window_start TIMESTAMPTZ,
  feature_window_end   TIMESTAMPTZ,
  population_group     TEXT,
  feature_name         TEXT NOT NULL,
  feature_value        FLOAT NOT NULL
);
";

pub const TABLE_NAMES: [&str; 3] = ["video_info", "video_interaction_events", "derived_feature_store"];
