//! JSON instance files for devices, assemblages and shared states.
//!
//! Complex matrices are nested row arrays of `[re, im]` pairs:
//!
//! ```json
//! {"kind": "pmd", "dim": 2, "outcomes": 2,
//!  "settings": [{"label": "Z", "elements": [[[[1,0],[0,0]],[[0,0],[0,0]]],
//!                                           [[[0,0],[0,0]],[[0,0],[1,0]]]]}]}
//! ```
//!
//! Floating-point values are written in shortest round-trip form, so an
//! export followed by a load reproduces every entry exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{c64, CMatrix, CVector, DensityOperator, Hermitian, Keep, PureBipartiteState};
use crate::quantum::{Assemblage, JointFamily, Pmd};
use crate::{Error, Result};

pub type ComplexEntry = [f64; 2];
pub type ComplexMatrix = Vec<Vec<ComplexEntry>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceFile {
    Pmd(FamilyFile),
    Assemblage(FamilyFile),
    State(StateFile),
}

/// Shared layout of device and assemblage files: one labelled list of
/// operators per setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub dim: usize,
    pub outcomes: usize,
    pub settings: Vec<SettingFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingFile {
    pub label: String,
    pub elements: Vec<ComplexMatrix>,
}

/// Either a density `matrix` with its factor dimensions, or pure
/// `amplitudes` (factor dimensions default to a square split).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_a: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<ComplexEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// A validated device together with the labels of its settings.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPmd {
    pub pmd: Pmd,
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledAssemblage {
    pub assemblage: Assemblage,
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateInstance {
    Pure(PureBipartiteState),
    Mixed { dim_a: usize, dim_b: usize, state: DensityOperator },
}

impl StateInstance {
    pub fn dim_a(&self) -> usize {
        match self {
            StateInstance::Pure(psi) => psi.dim_a(),
            StateInstance::Mixed { dim_a, .. } => *dim_a,
        }
    }

    pub fn dim_b(&self) -> usize {
        match self {
            StateInstance::Pure(psi) => psi.dim_b(),
            StateInstance::Mixed { dim_b, .. } => *dim_b,
        }
    }

    pub fn density(&self) -> DensityOperator {
        match self {
            StateInstance::Pure(psi) => psi.density(),
            StateInstance::Mixed { state, .. } => state.clone(),
        }
    }

    /// The reduced state on the first factor.
    pub fn reduced_a(&self) -> Result<DensityOperator> {
        self.density().reduced(self.dim_a(), Keep::A)
    }
}

pub fn matrix_to_json(m: &CMatrix) -> ComplexMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn vector_to_json(v: &CVector) -> Vec<ComplexEntry> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

/// Parses a square `dim × dim` Hermitian matrix; `location` names it in errors.
pub fn matrix_from_json(m: &ComplexMatrix, dim: usize, location: &str) -> Result<Hermitian> {
    if m.len() != dim {
        return Err(Error::Format(format!("{location} has {} rows, expected {dim}", m.len())));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Format(format!(
                "row {i} of {location} has {} entries, expected {dim}",
                row.len()
            )));
        }
        if row.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("row {i} of {location} has a non-finite entry")));
        }
    }
    let raw = CMatrix::from_fn(dim, dim, |i, j| c64(m[i][j][0], m[i][j][1]));
    Hermitian::new(raw).map_err(|e| Error::Format(format!("{location}: {e}")))
}

impl FamilyFile {
    fn from_members(members: &[Vec<Hermitian>], dim: usize, labels: Option<&[String]>) -> Result<Self> {
        if let Some(labels) = labels {
            if labels.len() != members.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} settings",
                    labels.len(),
                    members.len()
                )));
            }
        }
        let outcomes = members.first().map_or(0, Vec::len);
        let settings = members
            .iter()
            .enumerate()
            .map(|(x, row)| SettingFile {
                label: labels.map_or_else(|| x.to_string(), |l| l[x].clone()),
                elements: row.iter().map(|h| matrix_to_json(h.matrix())).collect(),
            })
            .collect();
        Ok(FamilyFile { dim, outcomes, settings, description: None, source: None })
    }

    fn members(&self, what: &str) -> Result<Vec<Vec<Hermitian>>> {
        if self.settings.is_empty() {
            return Err(Error::Format(format!("{what} file has no settings")));
        }
        self.settings
            .iter()
            .enumerate()
            .map(|(x, s)| {
                if s.elements.len() != self.outcomes {
                    return Err(Error::Format(format!(
                        "setting {x} ({}) has {} elements, expected {}",
                        s.label,
                        s.elements.len(),
                        self.outcomes
                    )));
                }
                s.elements
                    .iter()
                    .enumerate()
                    .map(|(a, m)| matrix_from_json(m, self.dim, &format!("settings[{x}].elements[{a}]")))
                    .collect()
            })
            .collect()
    }

    fn labels(&self) -> Vec<String> {
        self.settings.iter().map(|s| s.label.clone()).collect()
    }
}

impl InstanceFile {
    pub fn from_pmd(pmd: &Pmd, labels: Option<&[String]>) -> Result<Self> {
        let members: Vec<Vec<Hermitian>> = pmd.settings().iter().map(|s| s.elements().to_vec()).collect();
        Ok(InstanceFile::Pmd(FamilyFile::from_members(&members, pmd.dim(), labels)?))
    }

    pub fn from_assemblage(assemblage: &Assemblage, labels: Option<&[String]>) -> Result<Self> {
        Ok(InstanceFile::Assemblage(FamilyFile::from_members(
            assemblage.members(),
            assemblage.dim_b(),
            labels,
        )?))
    }

    pub fn from_pure_state(psi: &PureBipartiteState) -> Self {
        InstanceFile::State(StateFile {
            dim_a: Some(psi.dim_a()),
            dim_b: Some(psi.dim_b()),
            matrix: None,
            amplitudes: Some(vector_to_json(psi.amplitudes())),
            description: None,
            source: None,
        })
    }

    pub fn from_density(dim_a: usize, dim_b: usize, state: &DensityOperator) -> Result<Self> {
        if dim_a * dim_b != state.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state of dimension {} does not split as {dim_a} x {dim_b}",
                state.dim()
            )));
        }
        Ok(InstanceFile::State(StateFile {
            dim_a: Some(dim_a),
            dim_b: Some(dim_b),
            matrix: Some(matrix_to_json(state.op().matrix())),
            amplitudes: None,
            description: None,
            source: None,
        }))
    }

    pub fn with_metadata(mut self, description: Option<String>, source: Option<String>) -> Self {
        let (d, s) = match &mut self {
            InstanceFile::Pmd(f) | InstanceFile::Assemblage(f) => (&mut f.description, &mut f.source),
            InstanceFile::State(f) => (&mut f.description, &mut f.source),
        };
        *d = description;
        *s = source;
        self
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InstanceFile::Pmd(_) => "pmd",
            InstanceFile::Assemblage(_) => "assemblage",
            InstanceFile::State(_) => "state",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files always serialize")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    fn wrong_kind(&self, expected: &str) -> Error {
        Error::Format(format!("expected an instance of kind {expected}, found {}", self.kind()))
    }

    /// Builds and validates the device.
    pub fn into_pmd(self) -> Result<LabeledPmd> {
        let InstanceFile::Pmd(file) = self else {
            return Err(self.wrong_kind("pmd"));
        };
        let pmd = Pmd::from_elements(file.members("pmd")?)?;
        pmd.validate().into_result("pmd")?;
        Ok(LabeledPmd { pmd, labels: file.labels() })
    }

    pub fn into_assemblage(self) -> Result<LabeledAssemblage> {
        let InstanceFile::Assemblage(file) = self else {
            return Err(self.wrong_kind("assemblage"));
        };
        let assemblage = Assemblage::new(file.members("assemblage")?)?;
        assemblage.validate().into_result("assemblage")?;
        Ok(LabeledAssemblage { assemblage, labels: file.labels() })
    }

    pub fn into_state(self) -> Result<StateInstance> {
        let InstanceFile::State(file) = self else {
            return Err(self.wrong_kind("state"));
        };
        match (&file.matrix, &file.amplitudes) {
            (Some(m), None) => {
                let n = m.len();
                let (dim_a, dim_b) = split_dims(file.dim_a, file.dim_b, n)?;
                let op = matrix_from_json(m, n, "matrix")?;
                Ok(StateInstance::Mixed { dim_a, dim_b, state: DensityOperator::new(op)? })
            }
            (None, Some(amps)) => {
                if amps.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Format("amplitudes contain a non-finite entry".into()));
                }
                let (dim_a, dim_b) = split_dims(file.dim_a, file.dim_b, amps.len())?;
                let v = CVector::from_iterator(amps.len(), amps.iter().map(|z| c64(z[0], z[1])));
                Ok(StateInstance::Pure(PureBipartiteState::new(dim_a, dim_b, v)?))
            }
            _ => Err(Error::Format("a state needs exactly one of `matrix` or `amplitudes`".into())),
        }
    }
}

fn split_dims(dim_a: Option<usize>, dim_b: Option<usize>, total: usize) -> Result<(usize, usize)> {
    let dims = match (dim_a, dim_b) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) if a > 0 && total.is_multiple_of(a) => (a, total / a),
        (None, Some(b)) if b > 0 && total.is_multiple_of(b) => (total / b, b),
        (None, None) => {
            let d = (total as f64).sqrt().round() as usize;
            (d, d)
        }
        _ => (0, 0),
    };
    if dims.0 == 0 || dims.0 * dims.1 != total {
        return Err(Error::Format(format!(
            "state of total dimension {total} does not match dim_a = {dim_a:?}, dim_b = {dim_b:?}"
        )));
    }
    Ok(dims)
}

/// Joint operators of a star witness or unsteerable decomposition, stored
/// `settings[k].operators[a_x][a_*]` for each non-target setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointFile {
    pub target: usize,
    pub settings: Vec<JointSettingFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSettingFile {
    pub setting: usize,
    pub operators: Vec<Vec<ComplexMatrix>>,
}

impl JointFile {
    pub fn from_family(family: &JointFamily) -> Self {
        let settings = family
            .rows()
            .map(|(x, rows)| JointSettingFile {
                setting: x,
                operators: rows
                    .iter()
                    .map(|row| row.iter().map(|h| matrix_to_json(h.matrix())).collect())
                    .collect(),
            })
            .collect();
        JointFile { target: family.target(), settings }
    }
}

pub fn load_pmd(path: &Path) -> Result<LabeledPmd> {
    InstanceFile::read(path)?.into_pmd()
}

pub fn load_assemblage(path: &Path) -> Result<LabeledAssemblage> {
    InstanceFile::read(path)?.into_assemblage()
}

pub fn load_state(path: &Path) -> Result<StateInstance> {
    InstanceFile::read(path)?.into_state()
}

/// Resolves a setting given by label or, failing that, by 0-based index.
pub fn resolve_setting(labels: &[String], target: &str) -> Result<usize> {
    if let Some(x) = labels.iter().position(|l| l == target) {
        return Ok(x);
    }
    match target.parse::<usize>() {
        Ok(x) if x < labels.len() => Ok(x),
        _ => Err(Error::InvalidArgument(format!(
            "unknown setting {target:?}; labels are {labels:?}, indices 0..{}",
            labels.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::maximally_entangled;
    use crate::quantum::{assemblage_from_pure, pauli_pmd, random_pmd, random_pure_state};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(h: &Hermitian) -> Vec<(u64, u64)> {
        h.matrix().iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect()
    }

    #[test]
    fn pauli_device_round_trips() {
        let pmd = pauli_pmd(0.83).unwrap();
        let labels: Vec<String> = ["1", "2", "3"].map(String::from).to_vec();
        let file = InstanceFile::from_pmd(&pmd, Some(&labels)).unwrap();
        let back = InstanceFile::parse(&file.to_json()).unwrap().into_pmd().unwrap();
        assert_eq!(back.pmd, pmd);
        assert_eq!(back.labels, labels);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let text = r#"{"kind":"assemblage","dim":2,"outcomes":1,
            "settings":[{"label":"a","elements":[[[[0.5,0],[0,0]],[[0,0]]]]}]}"#;
        let err = InstanceFile::parse(text).unwrap().into_assemblage().unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("row 1")), "{err}");
    }

    #[test]
    fn invalid_povm_reports_violations() {
        let text = r#"{"kind":"pmd","dim":1,"outcomes":2,
            "settings":[{"label":"x","elements":[[[[0.7,0]]],[[[0.7,0]]]]}]}"#;
        let err = InstanceFile::parse(text).unwrap().into_pmd().unwrap_err();
        assert!(matches!(err, Error::Invalid { kind: "pmd", .. }), "{err}");
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let file = InstanceFile::from_pure_state(&maximally_entangled(2).unwrap());
        assert!(matches!(file.into_pmd(), Err(Error::Format(_))));
    }

    #[test]
    fn pure_state_without_dims_splits_square() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let text = format!(r#"{{"kind":"state","amplitudes":[[{h},0],[0,0],[0,0],[{h},0]]}}"#);
        let state = InstanceFile::parse(&text).unwrap().into_state().unwrap();
        assert_eq!((state.dim_a(), state.dim_b()), (2, 2));
        assert!((state.reduced_a().unwrap().op().trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn state_needs_exactly_one_representation() {
        let text = r#"{"kind":"state","dim_a":1,"dim_b":1}"#;
        assert!(InstanceFile::parse(text).unwrap().into_state().is_err());
    }

    #[test]
    fn density_round_trips_with_metadata() {
        let rho = random_pure_state(2, 3, 5).density();
        let file = InstanceFile::from_density(2, 3, &rho)
            .unwrap()
            .with_metadata(Some("random".into()), Some("test".into()));
        let text = file.to_json();
        assert!(text.contains("\"description\""));
        let StateInstance::Mixed { dim_a, dim_b, state } = InstanceFile::parse(&text).unwrap().into_state().unwrap()
        else {
            panic!("expected a density");
        };
        assert_eq!((dim_a, dim_b), (2, 3));
        assert_eq!(bits(state.op()), bits(rho.op()));
    }

    #[test]
    fn labels_then_indices() {
        let labels: Vec<String> = ["Z", "X"].map(String::from).to_vec();
        assert_eq!(resolve_setting(&labels, "X").unwrap(), 1);
        assert_eq!(resolve_setting(&labels, "0").unwrap(), 0);
        assert!(resolve_setting(&labels, "2").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn device_and_assemblage_round_trip_bit_exact(seed in any::<u64>(), dim in 2usize..4, settings in 1usize..4, outcomes in 2usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pmd = random_pmd(dim, settings, outcomes, &mut rng);
            let back = InstanceFile::parse(&InstanceFile::from_pmd(&pmd, None).unwrap().to_json())
                .unwrap()
                .into_pmd()
                .unwrap();
            for x in 0..settings {
                for a in 0..outcomes {
                    prop_assert_eq!(bits(back.pmd.element(x, a)), bits(pmd.element(x, a)));
                }
            }

            let psi = random_pure_state(dim, dim, seed ^ 0x5eed);
            let assemblage = assemblage_from_pure(&pmd, &psi).unwrap();
            let back = InstanceFile::parse(&InstanceFile::from_assemblage(&assemblage, None).unwrap().to_json())
                .unwrap()
                .into_assemblage()
                .unwrap();
            prop_assert_eq!(back.assemblage, assemblage);

            let back = InstanceFile::parse(&InstanceFile::from_pure_state(&psi).to_json())
                .unwrap()
                .into_state()
                .unwrap();
            prop_assert_eq!(back, StateInstance::Pure(psi));
        }
    }
}
