use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{join, sigmoid, Module, Parameter};
use crate::error::{Error, Result};

/// Update-gate GRU:
/// `z_t = σ(W_z x_t + U_z h_{t−1} + b_z)`,
/// `ĥ_t = tanh(W_h x_t + U_h h_{t−1} + b_h)`,
/// `h_t = (1 − z_t) ⊙ h_{t−1} + z_t ⊙ ĥ_t`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_z: Parameter,
    pub u_z: Parameter,
    pub b_z: Parameter,
    pub w_h: Parameter,
    pub u_h: Parameter,
    pub b_h: Parameter,
}

/// Per-step activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub h0: Array1<f64>,
    /// Hidden states, one row per step.
    pub states: Array2<f64>,
    pub z: Array2<f64>,
    pub candidate: Array2<f64>,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        GruCell {
            w_z: Parameter::glorot(hidden, input, rng),
            u_z: Parameter::glorot(hidden, hidden, rng),
            b_z: Parameter::zeros(&[hidden]),
            w_h: Parameter::glorot(hidden, input, rng),
            u_h: Parameter::glorot(hidden, hidden, rng),
            b_h: Parameter::zeros(&[hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.shape()[0]
    }

    /// Runs over the rows of `xs` starting from `h0` (zeros when `None`).
    pub fn forward(&self, xs: ArrayView2<'_, f64>, h0: Option<ArrayView1<'_, f64>>) -> Result<GruCache> {
        let hd = self.hidden_dim();
        if xs.nrows() == 0 {
            return Err(Error::Shape("GRU over an empty sequence".into()));
        }
        if xs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: xs.ncols(),
            });
        }
        let h0 = match h0 {
            Some(h) if h.len() != hd => {
                return Err(Error::DimensionMismatch {
                    expected: hd,
                    found: h.len(),
                })
            }
            Some(h) => h.to_owned(),
            None => Array1::zeros(hd),
        };
        let steps = xs.nrows();
        let mut xz = xs.dot(&self.w_z.mat().t());
        xz += &self.b_z.vec();
        let mut xh = xs.dot(&self.w_h.mat().t());
        xh += &self.b_h.vec();
        let (u_z, u_h) = (self.u_z.mat(), self.u_h.mat());

        let mut states = Array2::zeros((steps, hd));
        let mut z = Array2::zeros((steps, hd));
        let mut candidate = Array2::zeros((steps, hd));
        let mut prev = h0.clone();
        for t in 0..steps {
            let zt = (&xz.row(t) + &u_z.dot(&prev)).mapv(sigmoid);
            let ct = (&xh.row(t) + &u_h.dot(&prev)).mapv(f64::tanh);
            let ht = &prev + &(&zt * &(&ct - &prev));
            z.row_mut(t).assign(&zt);
            candidate.row_mut(t).assign(&ct);
            states.row_mut(t).assign(&ht);
            prev = ht;
        }
        Ok(GruCache {
            h0,
            states,
            z,
            candidate,
        })
    }

    /// `d_states[t]` is `∂L/∂h_t` from outside the recurrence. Accumulates
    /// parameter gradients; returns `(∂L/∂xs, ∂L/∂h0)`.
    pub fn backward(
        &mut self,
        xs: ArrayView2<'_, f64>,
        cache: &GruCache,
        d_states: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Array1<f64>) {
        let steps = xs.nrows();
        let hd = self.hidden_dim();
        let mut daz = Array2::zeros((steps, hd));
        let mut dah = Array2::zeros((steps, hd));
        let mut dhz = Array2::zeros((steps, hd));
        let mut carry = Array1::<f64>::zeros(hd);
        let u_z = self.u_z.mat().to_owned();
        let u_h = self.u_h.mat().to_owned();
        for t in (0..steps).rev() {
            let prev = if t == 0 { cache.h0.view() } else { cache.states.row(t - 1) };
            let dh = &d_states.row(t) + &carry;
            let zt = cache.z.row(t);
            let ct = cache.candidate.row(t);
            let gz = ndarray::Zip::from(&dh)
                .and(zt)
                .and(ct)
                .and(prev)
                .map_collect(|&g, &z, &c, &p| g * (c - p) * z * (1.0 - z));
            let gh = ndarray::Zip::from(&dh).and(zt).and(ct).map_collect(|&g, &z, &c| g * z * (1.0 - c * c));
            carry = ndarray::Zip::from(&dh).and(zt).map_collect(|&g, &z| g * (1.0 - z));
            carry += &u_z.t().dot(&gz);
            carry += &u_h.t().dot(&gh);
            daz.row_mut(t).assign(&gz);
            dah.row_mut(t).assign(&gh);
            dhz.row_mut(t).assign(&prev);
        }
        // dhz holds h_{t−1} row by row
        if self.w_z.trainable {
            self.w_z.grad_mat().scaled_add(1.0, &daz.t().dot(&xs));
        }
        if self.u_z.trainable {
            self.u_z.grad_mat().scaled_add(1.0, &daz.t().dot(&dhz));
        }
        if self.b_z.trainable {
            self.b_z.grad_vec().scaled_add(1.0, &daz.sum_axis(Axis(0)));
        }
        if self.w_h.trainable {
            self.w_h.grad_mat().scaled_add(1.0, &dah.t().dot(&xs));
        }
        if self.u_h.trainable {
            self.u_h.grad_mat().scaled_add(1.0, &dah.t().dot(&dhz));
        }
        if self.b_h.trainable {
            self.b_h.grad_vec().scaled_add(1.0, &dah.sum_axis(Axis(0)));
        }
        let dx = daz.dot(&self.w_z.mat()) + dah.dot(&self.w_h.mat());
        (dx, carry)
    }
}

impl Module for GruCell {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(&join(prefix, "w_z"), &mut self.w_z);
        f(&join(prefix, "u_z"), &mut self.u_z);
        f(&join(prefix, "b_z"), &mut self.b_z);
        f(&join(prefix, "w_h"), &mut self.w_h);
        f(&join(prefix, "u_h"), &mut self.u_h);
        f(&join(prefix, "b_h"), &mut self.b_h);
    }
}

/// Two GRUs reading the sequence in opposite directions; step `t` of the
/// output is `[h→_t ; h←_t]`.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

#[derive(Debug, Clone)]
pub struct BiGruCache {
    pub forward: GruCache,
    /// Run over the reversed sequence; row `i` is step `T−1−i`.
    pub backward: GruCache,
    /// Concatenated states, one row per step.
    pub states: Array2<f64>,
}

impl BiGru {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        BiGru {
            forward: GruCell::new(input, hidden, rng),
            backward: GruCell::new(input, hidden, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim()
    }

    pub fn run(&self, xs: ArrayView2<'_, f64>) -> Result<BiGruCache> {
        let hd = self.hidden_dim();
        let fwd = self.forward.forward(xs, None)?;
        let rev = xs.slice(s![..;-1, ..]);
        let bwd = self.backward.forward(rev, None)?;
        let mut states = Array2::zeros((xs.nrows(), 2 * hd));
        states.slice_mut(s![.., ..hd]).assign(&fwd.states);
        states.slice_mut(s![.., hd..]).assign(&bwd.states.slice(s![..;-1, ..]));
        Ok(BiGruCache {
            forward: fwd,
            backward: bwd,
            states,
        })
    }

    /// Returns `∂L/∂xs` given `∂L/∂states`.
    pub fn backprop(&mut self, xs: ArrayView2<'_, f64>, cache: &BiGruCache, d_states: ArrayView2<'_, f64>) -> Array2<f64> {
        let hd = self.hidden_dim();
        let (mut dx, _) = self.forward.backward(xs, &cache.forward, d_states.slice(s![.., ..hd]));
        let rev = xs.slice(s![..;-1, ..]);
        let d_rev = d_states.slice(s![..;-1, hd..]);
        let (dx_rev, _) = self.backward.backward(rev, &cache.backward, d_rev);
        dx += &dx_rev.slice(s![..;-1, ..]);
        dx
    }
}

impl Module for BiGru {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.forward.visit(&join(prefix, "fwd"), f);
        self.backward.visit(&join(prefix, "bwd"), f);
    }
}
