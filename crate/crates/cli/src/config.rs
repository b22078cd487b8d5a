//! Run configuration: one TOML file with flat tables.

use std::path::PathBuf;

use clusterbound::lattice::{Bottom, Lattice, LatticeKind, LatticeSpec};
use clusterbound::measure::{sublattice_layout, Direction, MeasurementLayout, OutcomePolicy};
use clusterbound::mps::CompressionPolicy;
use clusterbound::oracle::MAX_DENSE_QUBITS;
use clusterbound::stabilizer::{Family, PauliMix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Mps,
    Circuit,
    Stabilizer,
    Oracle,
    Ising,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub kind: LatticeKind,
    pub lx: usize,
    pub ly: usize,
    #[serde(default = "smooth")]
    pub bottom: Bottom,
    #[serde(default)]
    pub periodic: bool,
}

fn smooth() -> Bottom {
    Bottom::Smooth
}

/// Per-site replacement of the sublattice directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteOverride {
    pub site: usize,
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
    pub outcome: Option<OutcomePolicy>,
}

/// Angles are in radians. Spin sites are the open-circle sublattice
/// (Lieb vertices), coupling sites the filled one (Lieb edges).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    #[serde(default)]
    pub theta_spin: f64,
    #[serde(default)]
    pub phi_spin: f64,
    #[serde(default)]
    pub theta_coupling: f64,
    #[serde(default)]
    pub phi_coupling: f64,
    #[serde(default = "random_policy")]
    pub outcomes: OutcomePolicy,
    /// Draw the sign of `theta_coupling` at random per coupling site (x-z plane).
    #[serde(default)]
    pub sign_random: bool,
    #[serde(default)]
    pub overrides: Vec<SiteOverride>,
}

fn random_policy() -> OutcomePolicy {
    OutcomePolicy::Random
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            theta_spin: 0.0,
            phi_spin: 0.0,
            theta_coupling: 0.0,
            phi_coupling: 0.0,
            outcomes: OutcomePolicy::Random,
            sign_random: false,
            overrides: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub chi_max: Option<usize>,
}

fn default_epsilon() -> f64 {
    1e-9
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self { epsilon: default_epsilon(), chi_max: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizerConfig {
    #[serde(default)]
    pub p_x: f64,
    #[serde(default)]
    pub p_y: f64,
    #[serde(default = "one")]
    pub p_z: f64,
    /// Measure every vertex (top row included) in X; Lieb only.
    #[serde(default)]
    pub x_vertex: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for StabilizerConfig {
    fn default() -> Self {
        Self { p_x: 0.0, p_y: 0.0, p_z: 1.0, x_vertex: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    PX,
    PY,
    PZ,
}

/// A line through the Pauli simplex: `vary` runs over `from..=to`, `rest`
/// takes `1 - p`, the third probability is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixLine {
    pub vary: Axis,
    pub rest: Axis,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Stabilizer: boundary qubit counts `L`. Tensor engines: widths `Lx`.
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub mixes: Vec<[f64; 3]>,
    pub line: Option<MixLine>,
    /// Tensor engines: angles in units of pi/2, applied to both sublattices
    /// (to the coupling sublattice only when `layout.sign_random` is set).
    #[serde(default)]
    pub thetas: Vec<f64>,
    #[serde(default = "one")]
    pub depth_ratio: f64,
    #[serde(default = "default_divisor")]
    pub mi_divisor: usize,
}

fn default_divisor() -> usize {
    8
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { sizes: Vec::new(), mixes: Vec::new(), line: None, thetas: Vec::new(), depth_ratio: 1.0, mi_divisor: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub engine: Engine,
    #[serde(default)]
    pub seed: u64,
    pub n_traj: Option<u64>,
    pub out: Option<PathBuf>,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub layout: LayoutConfig,
    #[serde(default)]
    pub compression: CompressionConfig,
    #[serde(default)]
    pub stabilizer: StabilizerConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn n_traj(&self) -> u64 {
        self.n_traj.unwrap_or(match self.engine {
            Engine::Stabilizer => 300,
            _ => 20,
        })
    }

    pub fn spec(&self) -> LatticeSpec {
        let l = &self.lattice;
        let mut spec = match l.kind {
            LatticeKind::Square => LatticeSpec::square(l.lx, l.ly),
            LatticeKind::Lieb => LatticeSpec::lieb(l.lx, l.ly, l.bottom),
        };
        if l.periodic {
            spec = spec.periodic();
        }
        spec
    }

    pub fn policy(&self) -> CompressionPolicy {
        CompressionPolicy { epsilon: self.compression.epsilon, chi_max: self.compression.chi_max, renormalize: true }
    }

    pub fn mix(&self) -> Result<PauliMix, ConfigError> {
        let s = &self.stabilizer;
        PauliMix::new(s.p_x, s.p_y, s.p_z).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn family(&self) -> Family {
        Family {
            kind: self.lattice.kind,
            bottom: self.lattice.bottom,
            x_vertex: self.stabilizer.x_vertex,
            periodic: self.lattice.periodic,
            depth_ratio: self.sweep.depth_ratio,
            mi_divisor: self.sweep.mi_divisor,
        }
    }

    /// Sweep grid: explicit mixes followed by the line, if any.
    pub fn grid(&self) -> Result<Vec<PauliMix>, ConfigError> {
        let mut out = Vec::new();
        for m in &self.sweep.mixes {
            out.push(PauliMix::new(m[0], m[1], m[2]).map_err(|e| ConfigError(e.to_string()))?);
        }
        if let Some(line) = &self.sweep.line {
            if line.vary == line.rest || line.steps == 0 {
                return bad("sweep.line needs distinct axes and steps >= 1");
            }
            for k in 0..line.steps {
                let t = if line.steps == 1 { 0.0 } else { k as f64 / (line.steps - 1) as f64 };
                let p = line.from + t * (line.to - line.from);
                let mut v = [0.0; 3];
                v[line.vary as usize] = p;
                v[line.rest as usize] = 1.0 - p;
                out.push(PauliMix::new(v[0], v[1], v[2]).map_err(|e| ConfigError(e.to_string()))?);
            }
        }
        Ok(out)
    }

    /// Layout for one trajectory. The sign draw of `sign_random` is seeded by
    /// `(seed, trajectory)`.
    pub fn layout(&self, lat: &Lattice, trajectory: u64) -> MeasurementLayout {
        let l = &self.layout;
        let seed = clusterbound::measure::counter_hash(self.seed, trajectory, 0x4C41_594F);
        let mut m = sublattice_layout(
            lat,
            Direction { theta: l.theta_spin, phi: l.phi_spin },
            Direction { theta: l.theta_coupling, phi: l.phi_coupling },
            l.outcomes,
            l.sign_random,
            seed,
        );
        m.seed = self.seed;
        for o in &l.overrides {
            m.directions[o.site] = Direction { theta: o.theta, phi: o.phi };
            if let Some(p) = o.outcome {
                m.policies[o.site] = p;
            }
        }
        m
    }

    pub fn validate(&self) -> Result<Lattice, ConfigError> {
        let lat = Lattice::new(self.spec()).map_err(|e| ConfigError(e.to_string()))?;
        let stab = self.engine == Engine::Stabilizer;
        let born = self.layout.outcomes == OutcomePolicy::Born
            || self.layout.overrides.iter().any(|o| o.outcome == Some(OutcomePolicy::Born));
        if born && !stab {
            return bad("born outcomes require engine = \"stabilizer\"");
        }
        if self.lattice.periodic && !stab {
            return bad("periodic lattices require engine = \"stabilizer\"");
        }
        if self.stabilizer.x_vertex && self.lattice.kind != LatticeKind::Lieb {
            return bad("x_vertex applies to the lieb lattice only");
        }
        let l = &self.layout;
        for (name, theta, phi) in [("spin", l.theta_spin, l.phi_spin), ("coupling", l.theta_coupling, l.phi_coupling)] {
            if Direction::new(theta, phi).is_err() {
                return bad(format!("{name} direction ({theta}, {phi}) outside theta in [0, pi], phi in [0, 2pi)"));
            }
        }
        for o in &l.overrides {
            if o.site >= lat.len() {
                return bad(format!("override site {} out of range ({} sites)", o.site, lat.len()));
            }
            if Direction::new(o.theta, o.phi).is_err() {
                return bad(format!("override site {} has an invalid direction", o.site));
            }
        }
        if matches!(self.engine, Engine::Oracle | Engine::Ising) && lat.len() > MAX_DENSE_QUBITS {
            return bad(format!("{} sites exceed the dense limit of {MAX_DENSE_QUBITS}", lat.len()));
        }
        if !(self.compression.epsilon >= 0.0) {
            return bad("compression.epsilon must be >= 0");
        }
        if stab {
            self.mix()?;
        }
        self.grid()?;
        if self.n_traj == Some(0) {
            return bad("n_traj must be positive");
        }
        if self.sweep.mi_divisor == 0 || !(self.sweep.depth_ratio > 0.0) {
            return bad("sweep.mi_divisor and sweep.depth_ratio must be positive");
        }
        Ok(lat)
    }

    /// Checks for the `sweep` subcommand on top of [`RunConfig::validate`].
    pub fn validate_sweep(&self) -> Result<(), ConfigError> {
        if self.sweep.sizes.is_empty() {
            return bad("sweep.sizes is empty");
        }
        match self.engine {
            Engine::Stabilizer if self.grid()?.is_empty() => bad("sweep needs sweep.mixes or sweep.line"),
            Engine::Mps | Engine::Circuit if self.sweep.thetas.is_empty() => bad("sweep.thetas is empty"),
            Engine::Oracle | Engine::Ising => bad("sweep supports the stabilizer, mps and circuit engines"),
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 of the canonical JSON form, without the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Deterministic artifact file name.
    pub fn artifact(&self, stem: &str, ext: &str) -> String {
        let engine = serde_json::to_value(self.engine).expect("engine").as_str().unwrap_or("run").to_string();
        format!("{engine}-{}-s{}-{stem}.{ext}", &self.hash()[..12], self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = r#"
engine = "mps"
seed = 3
n_traj = 2
[lattice]
kind = "square"
lx = 4
ly = 4
[layout]
theta_spin = 1.2
theta_coupling = 1.2
"#;

    #[test]
    fn parse_and_validate() {
        let c = RunConfig::parse(GOLDEN).unwrap();
        assert!(c.validate().is_ok());
        assert_eq!(c.hash(), RunConfig::parse(GOLDEN).unwrap().hash());
        let born = GOLDEN.replace("theta_coupling = 1.2", "theta_coupling = 1.2\noutcomes = \"born\"");
        assert!(RunConfig::parse(&born).unwrap().validate().is_err());
        let periodic = GOLDEN.replace("ly = 4", "ly = 4\nperiodic = true");
        assert!(RunConfig::parse(&periodic).unwrap().validate().is_err());
        assert!(RunConfig::parse("engine = \"mps\"\nbogus = 1").is_err());
    }

    #[test]
    fn line_grid() {
        let text = format!("{GOLDEN}\n[sweep]\nline = {{ vary = \"p_y\", rest = \"p_z\", from = 0.8, to = 0.9, steps = 3 }}\n");
        let c = RunConfig::parse(&text).unwrap();
        let g = c.grid().unwrap();
        assert_eq!(g.len(), 3);
        assert!((g[1].p_y - 0.85).abs() < 1e-12 && (g[1].p_z - 0.15).abs() < 1e-12 && g[1].p_x == 0.0);
    }
}
