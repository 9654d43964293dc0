//! Named trainable tensors with gradient slots.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::autodiff::Gradients;
use crate::neural::ModelError;

#[derive(Debug, Clone)]
struct Param {
    value: Array2<f64>,
    grad: Array2<f64>,
}

/// Every parameter exists exactly once; its gradient slot always has the
/// same shape as the value. Iteration order is the name order, which keeps
/// optimizer updates deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: BTreeMap<String, Param>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) -> Result<(), ModelError> {
        if self.params.contains_key(name) {
            return Err(ModelError::DuplicateParam(name.to_string()));
        }
        let grad = Array2::zeros(value.dim());
        self.params.insert(name.to_string(), Param { value, grad });
        Ok(())
    }

    pub fn value(&self, name: &str) -> Option<&Array2<f64>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Array2<f64>> {
        self.params.get(name).map(|p| &p.grad)
    }

    /// Replace a parameter value; the shape must match.
    pub fn set(&mut self, name: &str, value: Array2<f64>) -> Result<(), ModelError> {
        let param = self
            .params
            .get_mut(name)
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))?;
        if param.value.dim() != value.dim() {
            return Err(ModelError::Shape(format!(
                "parameter {name:?} is {:?}, got {:?}",
                param.value.dim(),
                value.dim()
            )));
        }
        param.value = value;
        Ok(())
    }

    pub fn set_entry(&mut self, name: &str, r: usize, c: usize, v: f64) -> Result<(), ModelError> {
        let param = self
            .params
            .get_mut(name)
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))?;
        param.value[[r, c]] = v;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for param in self.params.values_mut() {
            param.grad.fill(0.0);
        }
    }

    /// Add a backward pass's gradients into the slots. Parameters absent
    /// from `grads` keep their current (typically zero) gradient.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<(), ModelError> {
        for (name, g) in &grads.by_param {
            let param = self
                .params
                .get_mut(name)
                .ok_or_else(|| ModelError::UnknownParam(name.clone()))?;
            if param.grad.dim() != g.dim() {
                return Err(ModelError::Shape(format!(
                    "gradient for {name:?} is {:?}, slot is {:?}",
                    g.dim(),
                    param.grad.dim()
                )));
            }
            param.grad += g;
        }
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total element count over all parameters.
    pub fn total_elements(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Visit `(name, value, grad)` in name order, mutating the value.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Array2<f64>, &Array2<f64>)) {
        for (name, param) in self.params.iter_mut() {
            f(name, &mut param.value, &param.grad);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParameterStore::new();
        store.insert("w", Array2::zeros((2, 2))).unwrap();
        assert!(matches!(
            store.insert("w", Array2::zeros((2, 2))),
            Err(ModelError::DuplicateParam(_))
        ));
    }

    #[test]
    fn grad_slots_match_value_shapes() {
        let mut store = ParameterStore::new();
        store.insert("w", array![[1.0, 2.0]]).unwrap();
        assert_eq!(store.grad("w").unwrap().dim(), (1, 2));
        let mut grads = Gradients::default();
        grads.by_param.insert("w".into(), array![[1.0], [2.0]]);
        assert!(matches!(store.accumulate(&grads), Err(ModelError::Shape(_))));
    }
}
