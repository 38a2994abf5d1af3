//! Analytic latency model: encoder cost, editing overhead, and per-step
//! decoder costs, measured at two input lengths and interpolated between.
//!
//! This is a calculator over supplied constants, not a profiler. Decoder
//! latency is assumed linear in the number of decoder steps; the editing
//! model pays a fixed overhead (pointer realization and its extra layers)
//! in exchange for running a 1-layer decoder, so it wins exactly when the
//! steps it saves cost more than that overhead.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Shorter input length the constants are measured at.
pub const SHORT_LENGTH: f64 = 128.0;
/// Longer input length the constants are measured at.
pub const LONG_LENGTH: f64 = 512.0;

/// Errors from model construction or estimation.
#[derive(Debug, Error, PartialEq)]
pub enum LatencyError {
    #[error("{name} must be positive at both lengths, got {value}")]
    NonPositiveConstant { name: &'static str, value: f64 },
    #[error("decoder steps must be non-negative and finite, got {steps}")]
    InvalidSteps { steps: f64 },
    #[error("input length must be positive and finite, got {length}")]
    InvalidLength { length: f64 },
    #[error("malformed latency config: {0}")]
    MalformedConfig(String),
}

/// A cost in milliseconds measured at input lengths 128 and 512.
///
/// Queries clamp below 128 (the measurement floor), interpolate linearly
/// between the two anchors, and extrapolate linearly above 512 — callers
/// can check [`LatencyModel::extrapolates`] to warn about the latter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthProfile {
    pub at_128: f64,
    pub at_512: f64,
}

impl LengthProfile {
    fn validate(&self, name: &'static str) -> Result<(), LatencyError> {
        for value in [self.at_128, self.at_512] {
            if !(value.is_finite() && value > 0.0) {
                return Err(LatencyError::NonPositiveConstant { name, value });
            }
        }
        Ok(())
    }

    /// Value at an arbitrary input length.
    pub fn value_at(&self, input_length: f64) -> f64 {
        let length = input_length.max(SHORT_LENGTH);
        let slope = (self.at_512 - self.at_128) / (LONG_LENGTH - SHORT_LENGTH);
        self.at_128 + slope * (length - SHORT_LENGTH)
    }
}

/// Which architecture an estimate is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Full sequence generation with a 1-layer decoder.
    #[serde(rename = "seq2seq-1layer")]
    Seq2seq1layer,
    /// Full sequence generation with a 12-layer decoder.
    #[serde(rename = "seq2seq-12layer")]
    Seq2seq12layer,
    /// Tag/point/insert editing: 1-layer decoder plus fixed overhead.
    #[serde(rename = "editing")]
    Editing,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::Seq2seq1layer,
        ModelKind::Seq2seq12layer,
        ModelKind::Editing,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Seq2seq1layer => "seq2seq-1layer",
            ModelKind::Seq2seq12layer => "seq2seq-12layer",
            ModelKind::Editing => "editing",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(text: &str) -> Result<ModelKind, String> {
        ModelKind::ALL
            .iter()
            .find(|kind| kind.as_str() == text)
            .copied()
            .ok_or_else(|| {
                format!(
                    "unknown model kind {text:?}; expected one of: {}",
                    ModelKind::ALL.map(|k| k.as_str()).join(", ")
                )
            })
    }
}

/// The four cost constants, each profiled over input length.
///
/// Defaults are the published measurements: encoder (with its projection
/// back to vocabulary space) 0.98/2.65 ms, worst-case editing overhead
/// 0.49/1.16 ms, 1-layer decoder step 0.15/0.17 ms, 12-layer decoder step
/// 1.26/1.47 ms, at lengths 128/512.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct LatencyModel {
    encoder: LengthProfile,
    overhead: LengthProfile,
    per_step_1layer: LengthProfile,
    per_step_12layer: LengthProfile,
}

impl Default for LatencyModel {
    fn default() -> LatencyModel {
        LatencyModel {
            encoder: LengthProfile {
                at_128: 0.98,
                at_512: 2.65,
            },
            overhead: LengthProfile {
                at_128: 0.49,
                at_512: 1.16,
            },
            per_step_1layer: LengthProfile {
                at_128: 0.15,
                at_512: 0.17,
            },
            per_step_12layer: LengthProfile {
                at_128: 1.26,
                at_512: 1.47,
            },
        }
    }
}

impl LatencyModel {
    pub fn new(
        encoder: LengthProfile,
        overhead: LengthProfile,
        per_step_1layer: LengthProfile,
        per_step_12layer: LengthProfile,
    ) -> Result<LatencyModel, LatencyError> {
        encoder.validate("encoder")?;
        overhead.validate("overhead")?;
        per_step_1layer.validate("per_step_1layer")?;
        per_step_12layer.validate("per_step_12layer")?;
        Ok(LatencyModel {
            encoder,
            overhead,
            per_step_1layer,
            per_step_12layer,
        })
    }

    /// Load constants from a JSON object with keys `encoder`, `overhead`,
    /// `per_step_1layer`, `per_step_12layer`, each `{"at_128": …,
    /// "at_512": …}`.
    pub fn from_json_str(text: &str) -> Result<LatencyModel, LatencyError> {
        serde_json::from_str(text).map_err(|e| LatencyError::MalformedConfig(e.to_string()))
    }

    pub fn encoder(&self) -> LengthProfile {
        self.encoder
    }

    pub fn overhead(&self) -> LengthProfile {
        self.overhead
    }

    pub fn per_step_1layer(&self) -> LengthProfile {
        self.per_step_1layer
    }

    pub fn per_step_12layer(&self) -> LengthProfile {
        self.per_step_12layer
    }

    /// Whether a query at this input length leaves the measured range
    /// (above 512) and therefore extrapolates.
    pub fn extrapolates(&self, input_length: f64) -> bool {
        input_length > LONG_LENGTH
    }

    fn check_length(input_length: f64) -> Result<(), LatencyError> {
        if !(input_length.is_finite() && input_length > 0.0) {
            return Err(LatencyError::InvalidLength {
                length: input_length,
            });
        }
        Ok(())
    }

    fn per_step(&self, kind: ModelKind) -> LengthProfile {
        match kind {
            ModelKind::Seq2seq1layer | ModelKind::Editing => self.per_step_1layer,
            ModelKind::Seq2seq12layer => self.per_step_12layer,
        }
    }

    /// End-to-end latency in milliseconds: encoder plus `steps` decoder
    /// steps, plus the fixed overhead for the editing model.
    pub fn estimate(
        &self,
        kind: ModelKind,
        input_length: f64,
        decoder_steps: f64,
    ) -> Result<f64, LatencyError> {
        Self::check_length(input_length)?;
        if !(decoder_steps.is_finite() && decoder_steps >= 0.0) {
            return Err(LatencyError::InvalidSteps {
                steps: decoder_steps,
            });
        }
        let mut cost = self.encoder.value_at(input_length)
            + decoder_steps * self.per_step(kind).value_at(input_length);
        if kind == ModelKind::Editing {
            cost += self.overhead.value_at(input_length);
        }
        Ok(cost)
    }

    /// Smallest whole number of decoder steps whose 1-layer cost strictly
    /// exceeds the editing overhead — the steps the editing model must
    /// save to come out ahead.
    pub fn break_even_steps(&self, input_length: f64) -> Result<u64, LatencyError> {
        Self::check_length(input_length)?;
        let overhead = self.overhead.value_at(input_length);
        let per_step = self.per_step_1layer.value_at(input_length);
        let mut steps = (overhead / per_step).ceil().max(0.0) as u64;
        if steps as f64 * per_step <= overhead {
            steps += 1;
        }
        Ok(steps)
    }

    /// Time spent decoding relative to encoding: `steps * per_step /
    /// encoder`. The editing overhead is not decoder time and is excluded.
    pub fn decoder_encoder_ratio(
        &self,
        kind: ModelKind,
        input_length: f64,
        decoder_steps: f64,
    ) -> Result<f64, LatencyError> {
        Self::check_length(input_length)?;
        if !(decoder_steps.is_finite() && decoder_steps >= 0.0) {
            return Err(LatencyError::InvalidSteps {
                steps: decoder_steps,
            });
        }
        Ok(decoder_steps * self.per_step(kind).value_at(input_length)
            / self.encoder.value_at(input_length))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    encoder: LengthProfile,
    overhead: LengthProfile,
    per_step_1layer: LengthProfile,
    per_step_12layer: LengthProfile,
}

impl From<LatencyModel> for ModelRecord {
    fn from(m: LatencyModel) -> ModelRecord {
        ModelRecord {
            encoder: m.encoder,
            overhead: m.overhead,
            per_step_1layer: m.per_step_1layer,
            per_step_12layer: m.per_step_12layer,
        }
    }
}

impl TryFrom<ModelRecord> for LatencyModel {
    type Error = LatencyError;

    fn try_from(r: ModelRecord) -> Result<LatencyModel, LatencyError> {
        LatencyModel::new(r.encoder, r.overhead, r.per_step_1layer, r.per_step_12layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_estimates_match_published_arithmetic() {
        let model = LatencyModel::default();
        // 1-layer seq2seq at length 128 with 24.7 steps.
        let seq = model
            .estimate(ModelKind::Seq2seq1layer, 128.0, 24.7)
            .unwrap();
        assert!((seq - 4.685).abs() < 1e-9, "got {seq}");
        // Editing at length 128 with 4.6 steps.
        let edit = model.estimate(ModelKind::Editing, 128.0, 4.6).unwrap();
        assert!((edit - 2.16).abs() < 1e-9, "got {edit}");
        // Zero steps leaves encoder (+ overhead) only.
        assert_eq!(
            model
                .estimate(ModelKind::Seq2seq1layer, 128.0, 0.0)
                .unwrap(),
            0.98
        );
        assert!((model.estimate(ModelKind::Editing, 128.0, 0.0).unwrap() - 1.47).abs() < 1e-12);
    }

    #[test]
    fn break_even_matches_published_step_counts() {
        let model = LatencyModel::default();
        assert_eq!(model.break_even_steps(128.0).unwrap(), 4);
        assert_eq!(model.break_even_steps(512.0).unwrap(), 7);
    }

    #[test]
    fn zero_overhead_breaks_even_at_one_step() {
        let tiny = LengthProfile {
            at_128: f64::MIN_POSITIVE,
            at_512: f64::MIN_POSITIVE,
        };
        let model = LatencyModel::new(
            LengthProfile {
                at_128: 1.0,
                at_512: 1.0,
            },
            tiny,
            LengthProfile {
                at_128: 0.15,
                at_512: 0.17,
            },
            LengthProfile {
                at_128: 1.26,
                at_512: 1.47,
            },
        )
        .unwrap();
        assert_eq!(model.break_even_steps(128.0).unwrap(), 1);
    }

    #[test]
    fn ratio_reproduces_published_comparisons() {
        let model = LatencyModel::default();
        let heavy = model
            .decoder_encoder_ratio(ModelKind::Seq2seq1layer, 128.0, 24.7)
            .unwrap();
        assert!((heavy - 3.78).abs() < 0.01, "got {heavy}");
        let light = model
            .decoder_encoder_ratio(ModelKind::Editing, 128.0, 4.6)
            .unwrap();
        assert!(light < 1.0, "editing decodes faster than it encodes");
        assert!((light - 0.70).abs() < 0.01, "got {light}");
        assert_eq!(
            model
                .decoder_encoder_ratio(ModelKind::Seq2seq12layer, 128.0, 0.0)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn profiles_clamp_interpolate_and_extrapolate() {
        let profile = LengthProfile {
            at_128: 1.0,
            at_512: 3.0,
        };
        assert_eq!(profile.value_at(64.0), 1.0, "clamped below the floor");
        assert_eq!(profile.value_at(128.0), 1.0);
        assert_eq!(profile.value_at(320.0), 2.0, "midpoint interpolates");
        assert_eq!(profile.value_at(512.0), 3.0);
        assert_eq!(profile.value_at(704.0), 4.0, "extrapolated above");
        let model = LatencyModel::default();
        assert!(!model.extrapolates(512.0));
        assert!(model.extrapolates(513.0));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let model = LatencyModel::default();
        assert_eq!(
            model.estimate(ModelKind::Editing, 128.0, -1.0).unwrap_err(),
            LatencyError::InvalidSteps { steps: -1.0 }
        );
        assert_eq!(
            model.estimate(ModelKind::Editing, 0.0, 1.0).unwrap_err(),
            LatencyError::InvalidLength { length: 0.0 }
        );
        let zeroed = LatencyModel::new(
            LengthProfile {
                at_128: 0.0,
                at_512: 1.0,
            },
            LengthProfile {
                at_128: 0.5,
                at_512: 1.0,
            },
            LengthProfile {
                at_128: 0.1,
                at_512: 0.2,
            },
            LengthProfile {
                at_128: 1.0,
                at_512: 1.5,
            },
        );
        assert_eq!(
            zeroed.unwrap_err(),
            LatencyError::NonPositiveConstant {
                name: "encoder",
                value: 0.0
            }
        );
    }

    #[test]
    fn json_config_round_trips_and_validates() {
        let model = LatencyModel::default();
        let json = serde_json::to_string(&model).unwrap();
        let back = LatencyModel::from_json_str(&json).unwrap();
        assert_eq!(back, model);
        let bad = r#"{"encoder": {"at_128": -1, "at_512": 1},
                      "overhead": {"at_128": 1, "at_512": 1},
                      "per_step_1layer": {"at_128": 1, "at_512": 1},
                      "per_step_12layer": {"at_128": 1, "at_512": 1}}"#;
        assert!(matches!(
            LatencyModel::from_json_str(bad),
            Err(LatencyError::MalformedConfig(_))
        ));
        assert!(matches!(
            LatencyModel::from_json_str("nope"),
            Err(LatencyError::MalformedConfig(_))
        ));
    }

    #[test]
    fn model_kind_strings_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("edit7".parse::<ModelKind>().is_err());
        assert_eq!(
            serde_json::to_string(&ModelKind::Seq2seq12layer).unwrap(),
            "\"seq2seq-12layer\""
        );
    }

    #[test]
    fn editing_beats_seq2seq_beyond_break_even() {
        let model = LatencyModel::default();
        for length in [64.0, 128.0, 200.0, 350.0, 512.0, 700.0] {
            let saved = model.break_even_steps(length).unwrap() as f64;
            for steps in 0..30 {
                let steps = steps as f64;
                let editing = model.estimate(ModelKind::Editing, length, steps).unwrap();
                let seq2seq = model
                    .estimate(ModelKind::Seq2seq1layer, length, steps + saved)
                    .unwrap();
                assert!(
                    editing < seq2seq,
                    "length {length}, steps {steps}: {editing} !< {seq2seq}"
                );
            }
        }
    }

    proptest! {
        /// Estimates grow (weakly) with both step count and input length
        /// under the default constants.
        #[test]
        fn estimate_is_monotone(
            length_a in 1.0f64..1024.0,
            length_b in 1.0f64..1024.0,
            steps_a in 0.0f64..64.0,
            steps_b in 0.0f64..64.0,
        ) {
            let model = LatencyModel::default();
            let (lo_len, hi_len) = if length_a <= length_b {
                (length_a, length_b)
            } else {
                (length_b, length_a)
            };
            let (lo_steps, hi_steps) = if steps_a <= steps_b {
                (steps_a, steps_b)
            } else {
                (steps_b, steps_a)
            };
            for kind in ModelKind::ALL {
                let small = model.estimate(kind, lo_len, lo_steps).unwrap();
                let large = model.estimate(kind, hi_len, hi_steps).unwrap();
                prop_assert!(small <= large + 1e-12);
            }
        }
    }
}
