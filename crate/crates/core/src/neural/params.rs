use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter `{name}` has {len} values but shape {shape:?} needs {expected}")]
    LengthMismatch {
        name: String,
        shape: Vec<usize>,
        len: usize,
        expected: usize,
    },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{0}` has a zero-sized dimension")]
    ZeroDimension(String),
    #[error("parameter sets are not architecture-compatible")]
    Incompatible,
}

/// One named tensor, stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl Parameter {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered, uniquely named set of network parameters.
///
/// Two sets are architecture-compatible when their names and shapes agree
/// pairwise and in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    entries: Vec<Parameter>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Result<(), ParamError> {
        let name = name.into();
        if shape.contains(&0) {
            return Err(ParamError::ZeroDimension(name));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(ParamError::LengthMismatch {
                name,
                shape,
                len: values.len(),
                expected,
            });
        }
        if self.entries.iter().any(|p| p.name == name) {
            return Err(ParamError::DuplicateName(name));
        }
        self.entries.push(Parameter { name, shape, values });
        Ok(())
    }

    pub fn entries(&self) -> &[Parameter] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Parameter> {
        self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Parameter] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.entries.iter().find(|p| p.name == name)
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(Parameter::len).sum()
    }

    pub fn is_compatible(&self, other: &ParameterSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn zeros_like(&self) -> ParameterSet {
        ParameterSet {
            entries: self
                .entries
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: vec![0.0; p.values.len()],
                })
                .collect(),
        }
    }

    /// All values in entry order.
    pub fn flat_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.entries.iter().flat_map(|p| p.values.iter().copied())
    }

    /// Returns `self − lr · grads` as a new set.
    pub fn sgd_step(&self, grads: &ParameterSet, lr: f32) -> Result<ParameterSet, ParamError> {
        let mut out = self.clone();
        out.apply_sgd(grads, lr)?;
        Ok(out)
    }

    /// In-place `self ← self − lr · grads`.
    pub fn apply_sgd(&mut self, grads: &ParameterSet, lr: f32) -> Result<(), ParamError> {
        if !self.is_compatible(grads) {
            return Err(ParamError::Incompatible);
        }
        for (p, g) in self.entries.iter_mut().zip(&grads.entries) {
            for (v, &d) in p.values.iter_mut().zip(&g.values) {
                *v -= lr * d;
            }
        }
        Ok(())
    }
}
