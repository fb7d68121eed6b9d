//! Stacked bidirectional LSTM with backpropagation through time.
//!
//! Gate order in the stacked weight matrices is input, forget, cell,
//! output. Between layers the input is multiplied by one dropout mask per
//! sequence.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, Init, ParamStore};

#[derive(Clone, Debug)]
pub struct BiLstm {
    pub prefix: String,
    pub layers: usize,
    pub hidden: usize,
    pub input: usize,
}

struct Direction {
    /// Activated gates per step, `T x 4h`.
    gates: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
}

pub struct LayerCache {
    /// Layer input after the dropout mask.
    x: Array2<f64>,
    mask: Option<Array1<f64>>,
    fw: Direction,
    bw: Direction,
}

pub struct BiLstmCache {
    layers: Vec<LayerCache>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn reversed(x: ArrayView2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

impl BiLstm {
    pub fn new(prefix: impl Into<String>, layers: usize, hidden: usize, input: usize) -> Self {
        BiLstm {
            prefix: prefix.into(),
            layers,
            hidden,
            input,
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    fn name(&self, layer: usize, dir: &str, what: &str) -> String {
        format!("{}.l{}.{}.{}", self.prefix, layer, dir, what)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let h = self.hidden;
        for k in 0..self.layers {
            let input = if k == 0 { self.input } else { 2 * h };
            for dir in ["fw", "bw"] {
                store.add(&self.name(k, dir, "wx"), 4 * h, input, Init::Glorot, rng);
                store.add(&self.name(k, dir, "wh"), 4 * h, h, Init::Glorot, rng);
                store.add(&self.name(k, dir, "b"), 1, 4 * h, Init::Zeros, rng);
            }
        }
    }

    /// Runs all layers over `x` (`T x input`), returning `T x 2h`.
    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
        dropout: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, BiLstmCache) {
        let mut input = x.clone();
        let mut layers = Vec::with_capacity(self.layers);
        for k in 0..self.layers {
            let mask = match rng.as_deref_mut() {
                Some(rng) if k > 0 && dropout > 0.0 => {
                    let mask = super::dropout::dropout_mask(input.ncols(), dropout, rng);
                    input *= &mask;
                    Some(mask)
                }
                _ => None,
            };
            let fw = self.run(store, k, "fw", input.view());
            let bw = self.run(store, k, "bw", reversed(input.view()).view());
            let mut out = Array2::zeros((input.nrows(), 2 * self.hidden));
            out.slice_mut(s![.., ..self.hidden]).assign(&fw.h);
            out.slice_mut(s![.., self.hidden..])
                .assign(&reversed(bw.h.view()));
            layers.push(LayerCache {
                x: input,
                mask,
                fw,
                bw,
            });
            input = out;
        }
        (input, BiLstmCache { layers })
    }

    fn run(&self, store: &ParamStore, layer: usize, dir: &str, x: ArrayView2<f64>) -> Direction {
        let h = self.hidden;
        let wx = store.get(&self.name(layer, dir, "wx"));
        let wh = store.get(&self.name(layer, dir, "wh"));
        let b = store.get(&self.name(layer, dir, "b")).row(0).to_owned();
        let steps = x.nrows();
        let xz = x.dot(&wx.t()) + &b;
        let mut gates = Array2::zeros((steps, 4 * h));
        let mut cs = Array2::zeros((steps, h));
        let mut hs = Array2::zeros((steps, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in 0..steps {
            let mut z = &xz.row(t) + &wh.dot(&h_prev);
            for j in 0..4 * h {
                z[j] = if (2 * h..3 * h).contains(&j) {
                    z[j].tanh()
                } else {
                    sigmoid(z[j])
                };
            }
            let c =
                &z.slice(s![h..2 * h]) * &c_prev + &z.slice(s![..h]) * &z.slice(s![2 * h..3 * h]);
            let hh = &z.slice(s![3 * h..]) * &c.mapv(f64::tanh);
            gates.row_mut(t).assign(&z);
            cs.row_mut(t).assign(&c);
            hs.row_mut(t).assign(&hh);
            h_prev = hh;
            c_prev = c;
        }
        Direction {
            gates,
            c: cs,
            h: hs,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn back(
        &self,
        store: &ParamStore,
        grads: &mut Gradients,
        layer: usize,
        dir: &str,
        x: ArrayView2<f64>,
        d: &Direction,
        dh_out: ArrayView2<f64>,
    ) -> Array2<f64> {
        let h = self.hidden;
        let steps = x.nrows();
        let wx_name = self.name(layer, dir, "wx");
        let wh_name = self.name(layer, dir, "wh");
        let b_name = self.name(layer, dir, "b");
        let wh = store.get(&wh_name);
        let mut dz_all = Array2::<f64>::zeros((steps, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for t in (0..steps).rev() {
            let dh = &dh_out.row(t) + &dh_next;
            let g = d.gates.row(t);
            let c = d.c.row(t);
            let mut dz = dz_all.row_mut(t);
            for j in 0..h {
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = c[j].tanh();
                let c_prev = if t > 0 { d.c[[t - 1, j]] } else { 0.0 };
                let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * gg * i * (1.0 - i);
                dz[h + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next = wh.t().dot(&dz);
        }
        *grads.entry(store, &wx_name) += &dz_all.t().dot(&x);
        *grads.entry(store, &b_name) += &dz_all.sum_axis(Axis(0)).insert_axis(Axis(0));
        if steps > 1 {
            *grads.entry(store, &wh_name) += &dz_all
                .slice(s![1.., ..])
                .t()
                .dot(&d.h.slice(s![..steps - 1, ..]));
        } else {
            grads.entry(store, &wh_name);
        }
        dz_all.dot(store.get(&wx_name))
    }

    /// Backpropagates `dout` (`T x 2h`), returning the gradient of the
    /// input.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &BiLstmCache,
        dout: &Array2<f64>,
        grads: &mut Gradients,
    ) -> Array2<f64> {
        let h = self.hidden;
        let mut d = dout.clone();
        for k in (0..self.layers).rev() {
            let lc = &cache.layers[k];
            let dx_fw = self.back(
                store,
                grads,
                k,
                "fw",
                lc.x.view(),
                &lc.fw,
                d.slice(s![.., ..h]),
            );
            let x_rev = reversed(lc.x.view());
            let dh_rev = reversed(d.slice(s![.., h..]));
            let dx_bw = self.back(store, grads, k, "bw", x_rev.view(), &lc.bw, dh_rev.view());
            let mut dx = dx_fw + reversed(dx_bw.view());
            if let Some(mask) = &lc.mask {
                Zip::from(dx.rows_mut()).for_each(|mut row| row *= mask);
            }
            d = dx;
        }
        d
    }
}
