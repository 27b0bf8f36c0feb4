//! Pulse-calibration configuration files: parsing, canonical emission,
//! binding onto circuits, and a defender-side lint.
//!
//! Grammar (line oriented, `#` starts a full-line comment):
//!
//! ```text
//! [server]
//! name = local-sim
//! pulse_dt_ns = 0.2222222222
//! max_amp = 1.0
//!
//! [calibration]
//! pre.q0.rx  = 1.5707963268
//! post.q0.rx2 = 4.7123889804
//! post.q0.ry  = 0.7853981634
//! ```
//!
//! Calibration keys are `<layer>.q<index>.<slot>` with `layer ∈ {pre, post}`
//! and `slot ∈ {rx, rx2, ry}`; the pre layer only has an `rx` slot. Angles
//! are radians, normalized into `[0, 2π)`. Every parse rejection carries its
//! 1-based line number.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use crate::backdoor::{BackdoorSpec, TriggerMode};
use crate::qsim::{Circuit, GateKind, LayerTag};
use crate::scalar::Real;

pub const DEFAULT_SERVER_NAME: &str = "local-statevector";
pub const DEFAULT_PULSE_DT_NS: f64 = 0.2222222222;
pub const DEFAULT_MAX_AMP: f64 = 1.0;

/// Lint threshold in radians: wrapped rotations larger than this are
/// flagged as semantics-altering.
pub const DEFAULT_LINT_THRESHOLD: f64 = 0.1;

/// Errors from config parsing and resolution. Parse-time variants carry the
/// offending 1-based line number.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: entry appears before any section header")]
    OutsideSection { line: usize },

    #[error("line {line}: unterminated section header")]
    MalformedSection { line: usize },

    #[error("line {line}: unknown section '[{name}]'")]
    UnknownSection { line: usize, name: String },

    #[error("line {line}: expected 'key = value'")]
    MissingEquals { line: usize },

    #[error("line {line}: empty key")]
    EmptyKey { line: usize },

    #[error("line {line}: unknown server key '{key}'")]
    UnknownServerKey { line: usize, key: String },

    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },

    #[error("line {line}: malformed calibration key '{key}' (expected <layer>.q<index>.<slot>)")]
    MalformedCalKey { line: usize, key: String },

    #[error("line {line}: unknown layer '{layer}' (expected pre or post)")]
    UnknownLayer { line: usize, layer: String },

    #[error("line {line}: unknown slot '{slot}' (expected rx, rx2 or ry)")]
    UnknownSlot { line: usize, slot: String },

    #[error("line {line}: the pre layer has no '{slot}' slot (only rx)")]
    PreLayerSlot { line: usize, slot: String },

    #[error("line {line}: invalid number '{value}'")]
    BadNumber { line: usize, value: String },

    #[error("line {line}: value must be finite")]
    NonFinite { line: usize },

    #[error("line {line}: '{key}' must be positive")]
    NonPositive { line: usize, key: String },

    #[error("cannot bind calibration onto {layer} {kind} gate at op {index}")]
    UnmappableGate {
        index: usize,
        kind: String,
        layer: String,
    },
}

impl ConfigError {
    /// 1-based line number for parse-time errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::OutsideSection { line }
            | ConfigError::MalformedSection { line }
            | ConfigError::UnknownSection { line, .. }
            | ConfigError::MissingEquals { line }
            | ConfigError::EmptyKey { line }
            | ConfigError::UnknownServerKey { line, .. }
            | ConfigError::DuplicateKey { line, .. }
            | ConfigError::MalformedCalKey { line, .. }
            | ConfigError::UnknownLayer { line, .. }
            | ConfigError::UnknownSlot { line, .. }
            | ConfigError::PreLayerSlot { line, .. }
            | ConfigError::BadNumber { line, .. }
            | ConfigError::NonFinite { line }
            | ConfigError::NonPositive { line, .. } => Some(*line),
            ConfigError::UnmappableGate { .. } => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Keys
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum CalLayer {
    Pre,
    Post,
}

impl CalLayer {
    pub fn name(self) -> &'static str {
        match self {
            CalLayer::Pre => "pre",
            CalLayer::Post => "post",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum CalSlot {
    /// Pre-layer RX, or (post) nothing; `pre.qN.rx`.
    Rx,
    /// Post-layer RX; `post.qN.rx2`.
    Rx2,
    /// Post-layer RY; `post.qN.ry`.
    Ry,
}

impl CalSlot {
    pub fn name(self) -> &'static str {
        match self {
            CalSlot::Rx => "rx",
            CalSlot::Rx2 => "rx2",
            CalSlot::Ry => "ry",
        }
    }
}

/// One calibration slot: layer, qubit, slot name.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct CalKey {
    pub layer: CalLayer,
    pub qubit: usize,
    pub slot: CalSlot,
}

impl CalKey {
    pub fn new(layer: CalLayer, qubit: usize, slot: CalSlot) -> Self {
        CalKey { layer, qubit, slot }
    }

    /// Canonical key text, e.g. `post.q3.rx2`.
    pub fn canonical(&self) -> String {
        format!("{}.q{}.{}", self.layer.name(), self.qubit, self.slot.name())
    }
}

impl std::fmt::Display for CalKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.canonical())
    }
}

// Calibration lines emit in lexicographic order of the canonical key text
// (so `post.q10.rx2` sorts before `post.q2.rx2`).
impl Ord for CalKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical().cmp(&other.canonical())
    }
}

impl PartialOrd for CalKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

/// Parsed server configuration. `[server]` values are report-only metadata;
/// the `[calibration]` map is what resolution binds onto circuits.
#[derive(Clone, PartialEq, Debug)]
pub struct ServerConfig {
    pub server_name: String,
    pub pulse_dt_ns: f64,
    pub max_amp: f64,
    pub calibration: BTreeMap<CalKey, f64>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            server_name: DEFAULT_SERVER_NAME.to_string(),
            pulse_dt_ns: DEFAULT_PULSE_DT_NS,
            max_amp: DEFAULT_MAX_AMP,
            calibration: BTreeMap::new(),
        }
    }
}

/// A benign config: default server metadata, no calibration entries.
pub fn benign_config() -> ServerConfig {
    ServerConfig::default()
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(v: f64) -> f64 {
    let r = v.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Server,
    Calibration,
}

/// Parses configuration text. Any rejected line reports its 1-based number;
/// a missing `[server]` section (or missing keys) falls back to defaults and
/// a missing `[calibration]` section means no calibration entries.
pub fn parse_config(text: &str) -> Result<ServerConfig, ConfigError> {
    let mut section: Option<Section> = None;
    let mut name: Option<String> = None;
    let mut pulse_dt_ns: Option<f64> = None;
    let mut max_amp: Option<f64> = None;
    let mut calibration: BTreeMap<CalKey, f64> = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed.starts_with('[') {
            let Some(inner) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) else {
                return Err(ConfigError::MalformedSection { line });
            };
            section = Some(match inner.trim() {
                "server" => Section::Server,
                "calibration" => Section::Calibration,
                other => {
                    return Err(ConfigError::UnknownSection {
                        line,
                        name: other.to_string(),
                    })
                }
            });
            continue;
        }
        let Some((key_part, value_part)) = trimmed.split_once('=') else {
            return Err(ConfigError::MissingEquals { line });
        };
        let key = key_part.trim();
        let value = value_part.trim();
        if key.is_empty() {
            return Err(ConfigError::EmptyKey { line });
        }
        match section {
            None => return Err(ConfigError::OutsideSection { line }),
            Some(Section::Server) => match key {
                "name" => {
                    if name.is_some() {
                        return Err(ConfigError::DuplicateKey {
                            line,
                            key: key.to_string(),
                        });
                    }
                    name = Some(value.to_string());
                }
                "pulse_dt_ns" | "max_amp" => {
                    let slot = if key == "pulse_dt_ns" {
                        &mut pulse_dt_ns
                    } else {
                        &mut max_amp
                    };
                    if slot.is_some() {
                        return Err(ConfigError::DuplicateKey {
                            line,
                            key: key.to_string(),
                        });
                    }
                    let parsed = parse_float(value, line)?;
                    if parsed <= 0.0 {
                        return Err(ConfigError::NonPositive {
                            line,
                            key: key.to_string(),
                        });
                    }
                    *slot = Some(parsed);
                }
                other => {
                    return Err(ConfigError::UnknownServerKey {
                        line,
                        key: other.to_string(),
                    })
                }
            },
            Some(Section::Calibration) => {
                let cal_key = parse_cal_key(key, line)?;
                let angle = normalize_angle(parse_float(value, line)?);
                if calibration.contains_key(&cal_key) {
                    return Err(ConfigError::DuplicateKey {
                        line,
                        key: cal_key.canonical(),
                    });
                }
                calibration.insert(cal_key, angle);
            }
        }
    }

    Ok(ServerConfig {
        server_name: name.unwrap_or_else(|| DEFAULT_SERVER_NAME.to_string()),
        pulse_dt_ns: pulse_dt_ns.unwrap_or(DEFAULT_PULSE_DT_NS),
        max_amp: max_amp.unwrap_or(DEFAULT_MAX_AMP),
        calibration,
    })
}

fn parse_float(value: &str, line: usize) -> Result<f64, ConfigError> {
    let parsed: f64 = value.parse().map_err(|_| ConfigError::BadNumber {
        line,
        value: value.to_string(),
    })?;
    if !parsed.is_finite() {
        return Err(ConfigError::NonFinite { line });
    }
    Ok(parsed)
}

fn parse_cal_key(key: &str, line: usize) -> Result<CalKey, ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    let [layer_part, qubit_part, slot_part] = parts.as_slice() else {
        return Err(ConfigError::MalformedCalKey {
            line,
            key: key.to_string(),
        });
    };
    let layer = match *layer_part {
        "pre" => CalLayer::Pre,
        "post" => CalLayer::Post,
        other => {
            return Err(ConfigError::UnknownLayer {
                line,
                layer: other.to_string(),
            })
        }
    };
    let qubit: usize = qubit_part
        .strip_prefix('q')
        .and_then(|digits| digits.parse().ok())
        .ok_or_else(|| ConfigError::MalformedCalKey {
            line,
            key: key.to_string(),
        })?;
    let slot = match *slot_part {
        "rx" => CalSlot::Rx,
        "rx2" => CalSlot::Rx2,
        "ry" => CalSlot::Ry,
        other => {
            return Err(ConfigError::UnknownSlot {
                line,
                slot: other.to_string(),
            })
        }
    };
    if layer == CalLayer::Pre && slot != CalSlot::Rx {
        return Err(ConfigError::PreLayerSlot {
            line,
            slot: slot.name().to_string(),
        });
    }
    Ok(CalKey { layer, qubit, slot })
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

/// Formats an angle for emission: normalize into `[0, 2π)`, render with 10
/// decimal places, and clamp the wrap boundary so the emitted text always
/// parses back below 2π (emit → parse → emit is a fixed point).
fn fmt_angle(v: f64) -> String {
    let s = format!("{:.10}", normalize_angle(v));
    let reparsed: f64 = s.parse().expect("formatted float reparses");
    if reparsed >= TAU {
        format!("{:.10}", 0.0)
    } else {
        s
    }
}

/// Canonical emission: `[server]` then `[calibration]`, keys in lexicographic
/// order, floats with 10 decimal places, `\n` line endings.
pub fn emit_config(config: &ServerConfig) -> String {
    let mut out = String::new();
    out.push_str("[server]\n");
    out.push_str(&format!("name = {}\n", config.server_name));
    out.push_str(&format!("pulse_dt_ns = {:.10}\n", config.pulse_dt_ns));
    out.push_str(&format!("max_amp = {:.10}\n", config.max_amp));
    out.push('\n');
    out.push_str("[calibration]\n");
    for (key, &angle) in &config.calibration {
        out.push_str(&format!("{} = {}\n", key.canonical(), fmt_angle(angle)));
    }
    out
}

/// Builds the calibration map that realizes a backdoor trigger: per listed
/// qubit, `pre.qN.rx` with the pre angle, and in Full mode also
/// `post.qN.rx2` / `post.qN.ry` with the post-RX angle and that qubit's θ.
pub fn trigger_config<T: Real>(spec: &BackdoorSpec<T>) -> ServerConfig {
    let mut config = ServerConfig::default();
    for (i, &q) in spec.qubits().iter().enumerate() {
        config.calibration.insert(
            CalKey::new(CalLayer::Pre, q, CalSlot::Rx),
            normalize_angle(spec.pre_angle().to_f64_lossy()),
        );
        if spec.mode() == TriggerMode::Full {
            config.calibration.insert(
                CalKey::new(CalLayer::Post, q, CalSlot::Rx2),
                normalize_angle(spec.post_rx_angle().to_f64_lossy()),
            );
            config.calibration.insert(
                CalKey::new(CalLayer::Post, q, CalSlot::Ry),
                normalize_angle(spec.theta()[i].to_f64_lossy()),
            );
        }
    }
    config
}

/// `emit_config(trigger_config(spec))`.
pub fn emit_trigger_config<T: Real>(spec: &BackdoorSpec<T>) -> String {
    emit_config(&trigger_config(spec))
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// A calibration entry that bound to no gate (for example a qubit with no
/// injected backdoor); reported, never fatal.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct ResolveWarning {
    pub key: CalKey,
    pub angle: f64,
}

impl std::fmt::Display for ResolveWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "calibration entry '{} = {:.10}' matches no backdoor gate",
            self.key, self.angle
        )
    }
}

/// Binds calibration angles onto every pre/post-encoding gate of a circuit:
/// `pre.qN.rx` → the pre-encoding RX on qubit N, `post.qN.rx2` /
/// `post.qN.ry` → the post-encoding RX / RY. Gates without an entry get
/// angle 0 (identity), so a benign config leaves the circuit's unitary
/// untouched. Resolution is idempotent. Unmatched entries come back as
/// warnings.
pub fn resolve<T: Real>(
    circuit: &Circuit<T>,
    config: &ServerConfig,
) -> Result<(Circuit<T>, Vec<ResolveWarning>), ConfigError> {
    let mut resolved = circuit.clone();
    let mut used: BTreeSet<CalKey> = BTreeSet::new();
    for (index, op) in resolved.ops_mut().iter_mut().enumerate() {
        let key = match (op.layer, op.kind) {
            (LayerTag::PreEncoding, GateKind::Rx) => {
                CalKey::new(CalLayer::Pre, op.qubits[0], CalSlot::Rx)
            }
            (LayerTag::PostEncoding, GateKind::Rx) => {
                CalKey::new(CalLayer::Post, op.qubits[0], CalSlot::Rx2)
            }
            (LayerTag::PostEncoding, GateKind::Ry) => {
                CalKey::new(CalLayer::Post, op.qubits[0], CalSlot::Ry)
            }
            (LayerTag::PreEncoding | LayerTag::PostEncoding, kind) => {
                return Err(ConfigError::UnmappableGate {
                    index,
                    kind: kind.to_string(),
                    layer: op.layer.to_string(),
                })
            }
            _ => continue,
        };
        let angle = config.calibration.get(&key).copied().unwrap_or(0.0);
        op.params[0] = T::of(angle);
        used.insert(key);
    }
    let warnings = config
        .calibration
        .iter()
        .filter(|(key, _)| !used.contains(key))
        .map(|(&key, &angle)| ResolveWarning { key, angle })
        .collect();
    Ok((resolved, warnings))
}

// ---------------------------------------------------------------------------
// Lint
// ---------------------------------------------------------------------------

/// A calibration entry whose rotation is too large to be a plausible
/// hardware correction.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct LintFinding {
    pub key: CalKey,
    pub angle: f64,
    /// Wrapped distance from the identity: `min(a, 2π - a)`.
    pub deviation: f64,
}

impl std::fmt::Display for LintFinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "calibration entry '{} = {:.10}' rotates {:.10} rad away from identity",
            self.key, self.angle, self.deviation
        )
    }
}

/// Flags calibration entries whose wrapped magnitude exceeds `threshold`
/// radians (strictly). Genuine calibration offsets are tiny; trigger angles
/// like π/2 and 3π/2 always trip the default threshold.
pub fn lint_config(config: &ServerConfig, threshold: f64) -> Vec<LintFinding> {
    config
        .calibration
        .iter()
        .filter_map(|(&key, &raw)| {
            let angle = normalize_angle(raw);
            let deviation = angle.min(TAU - angle);
            (deviation > threshold).then_some(LintFinding {
                key,
                angle,
                deviation,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{Circuit, GateOp};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn parses_the_full_grammar_with_comments_and_whitespace() {
        let text = "\
# generated by the pulse tuner
[server]
name = ibmq-mock backend
pulse_dt_ns = 0.2222222222
max_amp=1.0

[calibration]
  pre.q0.rx  =  1.5707963268
post.q0.rx2 = 4.7123889804
post.q0.ry=0.7853981634

# trailing comment
";
        let config = parse_config(text).unwrap();
        assert_eq!(config.server_name, "ibmq-mock backend");
        assert_eq!(config.pulse_dt_ns, 0.2222222222);
        assert_eq!(config.max_amp, 1.0);
        assert_eq!(config.calibration.len(), 3);
        let pre = config.calibration[&CalKey::new(CalLayer::Pre, 0, CalSlot::Rx)];
        assert!((pre - FRAC_PI_2).abs() <= 1e-9);
        let rx2 = config.calibration[&CalKey::new(CalLayer::Post, 0, CalSlot::Rx2)];
        assert!((rx2 - 3.0 * FRAC_PI_2).abs() <= 1e-9);
        let ry = config.calibration[&CalKey::new(CalLayer::Post, 0, CalSlot::Ry)];
        assert!((ry - FRAC_PI_4).abs() <= 1e-9);
    }

    #[test]
    fn missing_sections_fall_back_to_benign_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config, ServerConfig::default());
        assert!(config.calibration.is_empty());

        let config = parse_config("[calibration]\npre.q3.rx = 0.5\n").unwrap();
        assert_eq!(config.server_name, DEFAULT_SERVER_NAME);
        assert_eq!(config.calibration.len(), 1);

        let config = parse_config("[server]\nname = x\n").unwrap();
        assert_eq!(config.pulse_dt_ns, DEFAULT_PULSE_DT_NS);
        assert_eq!(config.max_amp, DEFAULT_MAX_AMP);
    }

    #[test]
    fn every_rejection_carries_its_line_number() {
        let cases: Vec<(&str, usize)> = vec![
            ("x = 1", 1),
            ("\n\n[unknown]", 3),
            ("[server", 1),
            ("[server]\nname", 2),
            ("[server]\n = 1", 2),
            ("[server]\nbogus = 3", 2),
            ("[server]\npulse_dt_ns = -1.0", 2),
            ("[server]\nmax_amp = 0", 2),
            ("[server]\npulse_dt_ns = abc", 2),
            ("[server]\npulse_dt_ns = inf", 2),
            ("[server]\nname = a\nname = b", 3),
            ("[calibration]\npre.q0 = 1", 2),
            ("[calibration]\nmid.q0.rx = 1", 2),
            ("[calibration]\npre.x0.rx = 1", 2),
            ("[calibration]\npre.q.rx = 1", 2),
            ("[calibration]\npre.q0.rz = 1", 2),
            ("[calibration]\npre.q0.ry = 1", 2),
            ("[calibration]\npre.q0.rx2 = 1", 2),
            ("[calibration]\npre.q0.rx = five", 2),
            ("[calibration]\npost.q1.ry = nan", 2),
            ("[calibration]\npre.q0.rx = 1\npre.q00.rx = 2", 3),
        ];
        for (text, expected_line) in cases {
            let err = parse_config(text).expect_err(text);
            assert_eq!(err.line(), Some(expected_line), "wrong line for {text:?}: {err}");
        }
    }

    #[test]
    fn specific_error_variants_fire() {
        assert!(matches!(
            parse_config("a = 1"),
            Err(ConfigError::OutsideSection { line: 1 })
        ));
        assert!(matches!(
            parse_config("[calibration]\npre.q0.ry = 1"),
            Err(ConfigError::PreLayerSlot { .. })
        ));
        assert!(matches!(
            parse_config("[calibration]\npre.q0.rx2 = 1"),
            Err(ConfigError::PreLayerSlot { .. })
        ));
        assert!(matches!(
            parse_config("[calibration]\npost.q0.rz = 1"),
            Err(ConfigError::UnknownSlot { .. })
        ));
        assert!(matches!(
            parse_config("[calibration]\nmid.q0.rx = 1"),
            Err(ConfigError::UnknownLayer { .. })
        ));
        // post.qN.rx is grammatically valid (it resolves to a warning later).
        assert!(parse_config("[calibration]\npost.q0.rx = 1").is_ok());
    }

    #[test]
    fn angles_normalize_into_zero_tau() {
        let config = parse_config(
            "[calibration]\npre.q0.rx = -1.5707963267948966\npre.q1.rx = 6.283185307179586\npre.q2.rx = 7.0\npre.q3.rx = -0.0\n",
        )
        .unwrap();
        let get = |q| config.calibration[&CalKey::new(CalLayer::Pre, q, CalSlot::Rx)];
        assert!((get(0) - 3.0 * FRAC_PI_2).abs() <= 1e-12, "-π/2 wraps to 3π/2");
        assert_eq!(get(1), 0.0, "2π wraps to exactly 0");
        assert!((get(2) - (7.0 - TAU)).abs() <= 1e-12);
        assert_eq!(get(3), 0.0);
        for &v in config.calibration.values() {
            assert!((0.0..TAU).contains(&v));
        }
    }

    #[test]
    fn emit_produces_the_canonical_golden_form() {
        let mut config = ServerConfig {
            server_name: "local-sim".to_string(),
            pulse_dt_ns: 0.2222222222,
            max_amp: 1.0,
            calibration: BTreeMap::new(),
        };
        config
            .calibration
            .insert(CalKey::new(CalLayer::Pre, 0, CalSlot::Rx), FRAC_PI_2);
        config
            .calibration
            .insert(CalKey::new(CalLayer::Post, 0, CalSlot::Rx2), 3.0 * FRAC_PI_2);
        config
            .calibration
            .insert(CalKey::new(CalLayer::Post, 0, CalSlot::Ry), FRAC_PI_4);
        let expected = "\
[server]
name = local-sim
pulse_dt_ns = 0.2222222222
max_amp = 1.0000000000

[calibration]
post.q0.rx2 = 4.7123889804
post.q0.ry = 0.7853981634
pre.q0.rx = 1.5707963268
";
        assert_eq!(emit_config(&config), expected);
    }

    #[test]
    fn emit_orders_keys_lexicographically_as_text() {
        let mut config = ServerConfig::default();
        for q in [2usize, 10, 1] {
            config
                .calibration
                .insert(CalKey::new(CalLayer::Pre, q, CalSlot::Rx), 0.5);
        }
        let emitted = emit_config(&config);
        let pre1 = emitted.find("pre.q1.rx").unwrap();
        let pre10 = emitted.find("pre.q10.rx").unwrap();
        let pre2 = emitted.find("pre.q2.rx").unwrap();
        assert!(pre1 < pre10 && pre10 < pre2, "string order: q1 < q10 < q2");
    }

    #[test]
    fn emit_parse_emit_is_a_fixed_point() {
        let mut config = ServerConfig::default();
        config
            .calibration
            .insert(CalKey::new(CalLayer::Pre, 0, CalSlot::Rx), FRAC_PI_2);
        config
            .calibration
            .insert(CalKey::new(CalLayer::Post, 7, CalSlot::Ry), -12.34567);
        // Wrap-boundary angle: rounds up to a string that would read ≥ 2π.
        config
            .calibration
            .insert(CalKey::new(CalLayer::Post, 3, CalSlot::Rx2), 6.28318530715);
        let first = emit_config(&config);
        let reparsed = parse_config(&first).unwrap();
        let second = emit_config(&reparsed);
        assert_eq!(first, second);
        assert!(second.contains("post.q3.rx2 = 0.0000000000"), "{second}");
    }

    #[test]
    fn resolve_binds_angles_and_defaults_missing_entries_to_zero() {
        let mut circuit = Circuit::<f64>::new(2).unwrap();
        circuit
            .push(GateOp::rx(0, 0.0).with_layer(LayerTag::PreEncoding))
            .unwrap();
        circuit
            .push(GateOp::ry(0, 0.3).with_layer(LayerTag::Encoding))
            .unwrap();
        circuit
            .push(GateOp::rx(0, 0.0).with_layer(LayerTag::PostEncoding))
            .unwrap();
        circuit
            .push(GateOp::ry(0, 0.0).with_layer(LayerTag::PostEncoding))
            .unwrap();
        let text = "\
[calibration]
pre.q0.rx = 1.0
post.q0.rx2 = 2.0
post.q1.ry = 0.25
";
        let config = parse_config(text).unwrap();
        let (resolved, warnings) = resolve(&circuit, &config).unwrap();
        let ops = resolved.ops();
        assert_eq!(ops[0].params[0], 1.0);
        assert_eq!(ops[1].params[0], 0.3, "encoding gate untouched");
        assert_eq!(ops[2].params[0], 2.0);
        assert_eq!(ops[3].params[0], 0.0, "missing post.q0.ry defaults to 0");
        assert_eq!(warnings.len(), 1, "entry for un-backdoored qubit warns");
        assert_eq!(warnings[0].key, CalKey::new(CalLayer::Post, 1, CalSlot::Ry));

        // Idempotence: resolving the resolved circuit changes nothing.
        let (again, _) = resolve(&resolved, &config).unwrap();
        assert_eq!(again, resolved);
    }

    #[test]
    fn resolve_rejects_unmappable_backdoor_gates() {
        let mut circuit = Circuit::<f64>::new(2).unwrap();
        circuit
            .push(GateOp::cnot(0, 1).with_layer(LayerTag::PreEncoding))
            .unwrap();
        assert!(matches!(
            resolve(&circuit, &benign_config()),
            Err(ConfigError::UnmappableGate { index: 0, .. })
        ));
    }

    #[test]
    fn post_rx_slot_parses_but_never_binds() {
        let mut circuit = Circuit::<f64>::new(1).unwrap();
        circuit
            .push(GateOp::rx(0, 0.0).with_layer(LayerTag::PreEncoding))
            .unwrap();
        let config = parse_config("[calibration]\npost.q0.rx = 1.0\n").unwrap();
        let (_, warnings) = resolve(&circuit, &config).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].key.slot, CalSlot::Rx);
        assert_eq!(warnings[0].key.layer, CalLayer::Post);
    }

    #[test]
    fn lint_flags_only_semantics_altering_magnitudes() {
        assert!(lint_config(&benign_config(), DEFAULT_LINT_THRESHOLD).is_empty());

        let mut config = ServerConfig::default();
        config
            .calibration
            .insert(CalKey::new(CalLayer::Pre, 0, CalSlot::Rx), 0.05);
        config
            .calibration
            .insert(CalKey::new(CalLayer::Pre, 1, CalSlot::Rx), TAU - 0.02);
        config
            .calibration
            .insert(CalKey::new(CalLayer::Pre, 2, CalSlot::Rx), 0.1);
        assert!(
            lint_config(&config, DEFAULT_LINT_THRESHOLD).is_empty(),
            "small wrapped offsets pass, threshold is strict"
        );

        config
            .calibration
            .insert(CalKey::new(CalLayer::Pre, 3, CalSlot::Rx), FRAC_PI_2);
        config
            .calibration
            .insert(CalKey::new(CalLayer::Post, 3, CalSlot::Rx2), 3.0 * FRAC_PI_2);
        config
            .calibration
            .insert(CalKey::new(CalLayer::Post, 3, CalSlot::Ry), FRAC_PI_4);
        let findings = lint_config(&config, DEFAULT_LINT_THRESHOLD);
        assert_eq!(findings.len(), 3, "a full trigger trips all three slots");
        for finding in &findings {
            assert!(finding.deviation <= PI + 1e-12, "wrapped deviation is ≤ π");
            assert!(finding.deviation > DEFAULT_LINT_THRESHOLD);
        }
    }

    #[test]
    fn parser_is_total_on_hostile_smoke_inputs() {
        for text in [
            "[]",
            "[server]]",
            "==",
            "pre.q0.rx = 1",
            "[calibration]\n.q0.rx = 1",
            "[calibration]\npre..rx = 1",
            "[calibration]\npre.q0. = 1",
            "[calibration]\npre.q99999999999999999999999.rx = 1",
            "\u{0}\u{1}",
            "[calibration]\npre.q0.rx = 1e400",
        ] {
            let _ = parse_config(text);
        }
    }
}
