//! Deep minimal TMC: `p(y_t|y_{t-1}) p(z_t|z_{t-1}) p(x_t|y_t, z_t)`.
//!
//! The variational side runs a deterministic recurrence
//! `h~_t = rnn([x_t, y_t, z_t], h~_{t-1})` and factorizes as
//! `q(y_t | x_t, h~_{t-1})` followed by `q(z_t | x_t, y_t, h~_{t-1})`.

use serde::{Deserialize, Serialize};

use super::{check_dim, gaussian_net, label_dist, label_net, TmcConfig, TransitionTerms};
use crate::autodiff::{Graph, Var};
use crate::distributions::{DiagGaussian, LabelDistribution};
use crate::error::Result;
use crate::nn::{Bound, Group, Mlp2, ParamId, ParamSet, RnnCell, TensorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmtmcNets {
    /// Logit(s) of the learnable initial label distribution.
    pub init_y: ParamId,
    pub py: Mlp2,
    pub pz: Option<Mlp2>,
    pub px: Mlp2,
    pub qy: Mlp2,
    pub qz: Option<Mlp2>,
    pub rnn: RnnCell,
}

/// Result of one variational step.
#[derive(Debug, Clone, Copy)]
pub struct DmtmcState {
    pub q_y: LabelDistribution,
    pub q_z: Option<DiagGaussian>,
    pub z: Var,
    pub h_next: Var,
}

impl DmtmcNets {
    pub fn new(params: &mut ParamSet, cfg: &TmcConfig) -> Self {
        let (c, dz, dx, s) = (cfg.classes, cfg.d_z, cfg.d_x, cfg.rnn_state_dim);
        let gen = Group::Generative;
        let var = Group::Variational;
        let init_y = params.add("p_y0.logit", cfg.label_head_width(), 1, TensorKind::Free, gen);
        let py = label_net(params, "psi_py", c, cfg, gen);
        let pz = (dz > 0).then(|| gaussian_net(params, "psi_pz", dz, dz, cfg, gen));
        let px = gaussian_net(params, "psi_px", c + dz, dx, cfg, gen);
        let qy = label_net(params, "psi_qy", dx + s, cfg, var);
        let qz = (dz > 0).then(|| gaussian_net(params, "psi_qz", dx + c + s, dz, cfg, var));
        let rnn = RnnCell::new(params, "rnn_h", dx + c + dz, s, var);
        Self {
            init_y,
            py,
            pz,
            px,
            qy,
            qz,
            rnn,
        }
    }

    /// `p(y_0)` when `y_prev` is `None`, else `p(y_t | y_{t-1})`.
    pub fn prior_y(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, y_prev: Option<Var>) -> Result<LabelDistribution> {
        match y_prev {
            None => {
                let logit = p.var(self.init_y);
                let out = if cfg.classes == 2 { g.sigmoid(logit) } else { logit };
                label_dist(g, out, cfg.classes)
            }
            Some(y) => {
                check_dim(g, y, cfg.classes, "previous label")?;
                let out = self.py.forward(g, p, y)?;
                label_dist(g, out, cfg.classes)
            }
        }
    }

    /// `N(0, I)` at t = 0, else `p(z_t | z_{t-1})`. `None` when `d_z = 0`.
    pub fn prior_z(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, z_prev: Option<Var>) -> Result<Option<DiagGaussian>> {
        let Some(net) = &self.pz else { return Ok(None) };
        Ok(Some(match z_prev {
            None => DiagGaussian::standard(g, cfg.d_z),
            Some(z) => {
                let out = net.forward(g, p, z)?;
                DiagGaussian::from_head(g, out, cfg.d_z)?
            }
        }))
    }

    /// `p(x_t | y_t, z_t)`.
    pub fn emission(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, y: Var, z: Var) -> Result<DiagGaussian> {
        check_dim(g, y, cfg.classes, "label")?;
        check_dim(g, z, cfg.d_z, "latent")?;
        let input = g.concat(&[y, z]);
        let out = self.px.forward(g, p, input)?;
        DiagGaussian::from_head(g, out, cfg.d_x)
    }

    /// Generative log terms of one transition; `prev = (y_{t-1}, z_{t-1})`.
    pub fn transition(
        &self,
        g: &mut Graph,
        p: &Bound,
        cfg: &TmcConfig,
        prev: Option<(Var, Var)>,
        x: Var,
        y: Var,
        z: Var,
    ) -> Result<TransitionTerms> {
        check_dim(g, x, cfg.d_x, "observation")?;
        let py = self.prior_y(g, p, cfg, prev.map(|(y, _)| y))?;
        let log_py = py.log_pmf(g, y)?;
        let log_pz = match self.prior_z(g, p, cfg, prev.map(|(_, z)| z))? {
            Some(pz) => Some(pz.log_pdf(g, z)?),
            None => {
                check_dim(g, z, 0, "latent")?;
                None
            }
        };
        let px = self.emission(g, p, cfg, y, z)?;
        let log_px = px.log_pdf(g, x)?;
        Ok(TransitionTerms {
            log_py,
            log_pz,
            log_px,
            log_qy: None,
            log_qz: None,
        })
    }

    pub fn initial_state(&self, g: &mut Graph, cfg: &TmcConfig) -> Var {
        g.constant(vec![0.0; cfg.rnn_state_dim])
    }

    /// `q(y_t | x_t, h~_{t-1})`.
    pub fn q_y(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, x: Var, h: Var) -> Result<LabelDistribution> {
        check_dim(g, x, cfg.d_x, "observation")?;
        check_dim(g, h, cfg.rnn_state_dim, "recurrent state")?;
        let input = g.concat(&[x, h]);
        let out = self.qy.forward(g, p, input)?;
        label_dist(g, out, cfg.classes)
    }

    /// `q(z_t | x_t, y_t, h~_{t-1})`.
    pub fn q_z(&self, g: &mut Graph, p: &Bound, cfg: &TmcConfig, x: Var, y: Var, h: Var) -> Result<Option<DiagGaussian>> {
        let Some(net) = &self.qz else { return Ok(None) };
        check_dim(g, y, cfg.classes, "label")?;
        let input = g.concat(&[x, y, h]);
        let out = net.forward(g, p, input)?;
        Ok(Some(DiagGaussian::from_head(g, out, cfg.d_z)?))
    }

    /// `h~_t` from `(x_t, y_t, z_t, h~_{t-1})`.
    pub fn advance(&self, g: &mut Graph, p: &Bound, x: Var, y: Var, z: Var, h: Var) -> Result<Var> {
        let input = g.concat(&[x, y, z]);
        self.rnn.step(g, p, input, h)
    }

    /// Full variational step given the label to condition on: computes
    /// `q_y`, then `q_z`, draws `z_t` with `z_noise` and advances the state.
    pub fn variational_step(
        &self,
        g: &mut Graph,
        p: &Bound,
        cfg: &TmcConfig,
        x: Var,
        y: Var,
        h: Var,
        z_noise: &[f64],
    ) -> Result<DmtmcState> {
        let q_y = self.q_y(g, p, cfg, x, h)?;
        let q_z = self.q_z(g, p, cfg, x, y, h)?;
        let z = match &q_z {
            Some(q) => q.rsample(g, z_noise)?,
            None => g.constant(Vec::new()),
        };
        let h_next = self.advance(g, p, x, y, z, h)?;
        Ok(DmtmcState { q_y, q_z, z, h_next })
    }
}
