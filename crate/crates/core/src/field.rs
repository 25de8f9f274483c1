//! Element-local scalar fields.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// `n = E (N+1)^3` values stored element by element, with interface
/// points duplicated in every element that touches them.
///
/// Within an element the point `(i, j, k)` lives at `i + (N+1) (j + (N+1) k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field<T>(pub Vec<T>);

impl<T: Real> Field<T> {
    pub fn zeros(len: usize) -> Self {
        Field(vec![T::zero(); len])
    }

    pub fn constant(len: usize, value: T) -> Self {
        Field(vec![value; len])
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Field(values.iter().map(|&v| T::of(v)).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.widen()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.widen().abs()))
    }
}

impl<T> Field<T> {
    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> From<Vec<T>> for Field<T> {
    fn from(v: Vec<T>) -> Self {
        Field(v)
    }
}

impl<T> Deref for Field<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for Field<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}
