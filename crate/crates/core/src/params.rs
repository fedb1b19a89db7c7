//! Named views over parameter tensors, shared by the optimizer, the
//! checkpoint writer and the gradient checker.

/// Read-only view of one parameter tensor.
#[derive(Debug)]
pub struct Tensor<'a, T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [T],
    /// Rows are indexed by input feature; gradients for rows of absent
    /// features are zero and may be skipped.
    pub feature_rows: bool,
}

#[derive(Debug)]
pub struct TensorMut<'a, T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a mut [T],
    pub feature_rows: bool,
}

/// A fixed, ordered collection of named tensors.
pub trait ParamSet<T> {
    fn tensors(&self) -> Vec<Tensor<'_, T>>;
    fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}

pub(crate) fn prefixed(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
