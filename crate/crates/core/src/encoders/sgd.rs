use super::params::{EncoderParams, LineInput};
use super::EncoderError;

/// Weights kept as `scale * V` so an L2 decay step costs O(1) instead of
/// touching every stored column.
pub(crate) struct ScaledParams {
    params: EncoderParams,
    scale: f64,
}

impl ScaledParams {
    pub fn new(params: EncoderParams) -> Self {
        Self { params, scale: 1.0 }
    }

    pub fn emission_scores(&self, input: &LineInput) -> Result<Vec<f64>, EncoderError> {
        let mut scores = self.params.emission_scores(input)?;
        scores.iter_mut().for_each(|s| *s *= self.scale);
        Ok(scores)
    }

    /// `W <- factor * W`.
    pub fn decay(&mut self, factor: f64) {
        if factor <= 0.0 {
            // lr * l2 >= 1 wipes the weights in one step
            self.scale = 1.0;
            for (_, col) in self.params.columns_mut() {
                col.iter_mut().for_each(|w| *w = 0.0);
            }
            return;
        }
        self.scale *= factor;
        if self.scale < 1e-6 {
            self.fold_scale();
        }
    }

    /// `W[:, feature] += delta`.
    pub fn add_to_column(&mut self, feature: u32, delta: &[f64]) {
        let inv = 1.0 / self.scale;
        let col = self.params.column_mut(feature);
        col.iter_mut().zip(delta).for_each(|(w, d)| *w += d * inv);
    }

    pub fn squared_norm(&self) -> f64 {
        let raw: f64 = self
            .params
            .columns()
            .flat_map(|(_, c)| c.iter())
            .map(|w| w * w)
            .sum();
        raw * self.scale * self.scale
    }

    fn fold_scale(&mut self) {
        let s = self.scale;
        for (_, col) in self.params.columns_mut() {
            col.iter_mut().for_each(|w| *w *= s);
        }
        self.scale = 1.0;
    }

    pub fn into_params(mut self) -> EncoderParams {
        if self.scale != 1.0 {
            self.fold_scale();
        }
        self.params
    }
}
