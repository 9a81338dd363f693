use crate::error::{Error, Result};
use crate::init::InitConfig;
use crate::model::ShDegree;

use super::adam::LearningRates;

/// Optimization hyperparameters. Learning rates for positions are relative
/// to the scene extent.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub loss_lambda: f64,
    pub position_lr_init: f64,
    pub position_lr_final: f64,
    /// Steps over which the position rate decays; held at the final value after.
    pub position_lr_max_steps: usize,
    pub sh_dc_lr: f64,
    pub sh_rest_lr: f64,
    pub opacity_lr: f64,
    pub scale_lr: f64,
    pub rotation_lr: f64,
    pub densify_interval: usize,
    pub densify_from: usize,
    /// Densification stops after this fraction of `iterations`.
    pub densify_until_fraction: f64,
    pub densify_grad_threshold: f64,
    /// Split threshold as a fraction of the scene extent.
    pub percent_dense: f64,
    pub prune_opacity: f64,
    pub opacity_reset_interval: usize,
    pub sh_degree_interval: usize,
    pub max_sh_degree: u32,
    pub seed: u64,
    pub background: [f64; 3],
    pub parallel: bool,
    pub init: InitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 7_000,
            loss_lambda: 0.2,
            position_lr_init: 1.6e-4,
            position_lr_final: 1.6e-6,
            position_lr_max_steps: 30_000,
            sh_dc_lr: 2.5e-3,
            sh_rest_lr: 2.5e-3 / 20.0,
            opacity_lr: 5e-2,
            scale_lr: 5e-3,
            rotation_lr: 1e-3,
            densify_interval: 100,
            densify_from: 500,
            densify_until_fraction: 0.5,
            densify_grad_threshold: 2e-4,
            percent_dense: 0.01,
            prune_opacity: 5e-3,
            opacity_reset_interval: 3_000,
            sh_degree_interval: 1_000,
            max_sh_degree: 3,
            seed: 42,
            background: [0.0; 3],
            parallel: true,
            init: InitConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The full-scale schedule (30k iterations).
    pub fn full() -> Self {
        Self {
            iterations: 30_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("position_lr_init", self.position_lr_init),
            ("position_lr_final", self.position_lr_final),
            ("sh_dc_lr", self.sh_dc_lr),
            ("sh_rest_lr", self.sh_rest_lr),
            ("opacity_lr", self.opacity_lr),
            ("scale_lr", self.scale_lr),
            ("rotation_lr", self.rotation_lr),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
        if !(0.0..=1.0).contains(&self.loss_lambda) {
            return Err(Error::domain(format!(
                "loss_lambda {} outside [0,1]",
                self.loss_lambda
            )));
        }
        if self.densify_interval == 0
            || self.position_lr_max_steps == 0
            || self.opacity_reset_interval == 0
            || self.sh_degree_interval == 0
        {
            return Err(Error::domain("intervals must be at least 1"));
        }
        ShDegree::new(self.max_sh_degree)?;
        self.init.validate()
    }

    pub fn densify_until(&self) -> usize {
        (self.iterations as f64 * self.densify_until_fraction).round() as usize
    }

    /// Position learning rate at a 1-based iteration, interpolated
    /// log-linearly from the initial to the final value.
    pub fn position_lr(&self, iteration: usize, extent: f64) -> f64 {
        let t = (iteration as f64 / self.position_lr_max_steps as f64).clamp(0.0, 1.0);
        let log_lr = self.position_lr_init.ln() * (1.0 - t) + self.position_lr_final.ln() * t;
        log_lr.exp() * extent
    }

    pub fn learning_rates(&self, iteration: usize, extent: f64) -> LearningRates {
        LearningRates {
            position: self.position_lr(iteration, extent),
            log_scale: self.scale_lr,
            rotation: self.rotation_lr,
            opacity: self.opacity_lr,
            sh_dc: self.sh_dc_lr,
            sh_rest: self.sh_rest_lr,
        }
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::domain(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "iterations" => self.iterations = p(key, value)?,
            "loss_lambda" => self.loss_lambda = p(key, value)?,
            "position_lr_init" => self.position_lr_init = p(key, value)?,
            "position_lr_final" => self.position_lr_final = p(key, value)?,
            "position_lr_max_steps" => self.position_lr_max_steps = p(key, value)?,
            "sh_dc_lr" => self.sh_dc_lr = p(key, value)?,
            "sh_rest_lr" => self.sh_rest_lr = p(key, value)?,
            "opacity_lr" => self.opacity_lr = p(key, value)?,
            "scale_lr" => self.scale_lr = p(key, value)?,
            "rotation_lr" => self.rotation_lr = p(key, value)?,
            "densify_interval" => self.densify_interval = p(key, value)?,
            "densify_from" => self.densify_from = p(key, value)?,
            "densify_until_fraction" => self.densify_until_fraction = p(key, value)?,
            "densify_grad_threshold" => self.densify_grad_threshold = p(key, value)?,
            "percent_dense" => self.percent_dense = p(key, value)?,
            "prune_opacity" => self.prune_opacity = p(key, value)?,
            "opacity_reset_interval" => self.opacity_reset_interval = p(key, value)?,
            "sh_degree_interval" => self.sh_degree_interval = p(key, value)?,
            "max_sh_degree" => self.max_sh_degree = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "parallel" => self.parallel = p(key, value)?,
            "background" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|s| p(key, s.trim()))
                    .collect::<Result<_>>()?;
                let [r, g, b] = parts[..] else {
                    return Err(Error::domain("background needs three comma-separated values"));
                };
                self.background = [r, g, b];
            }
            "knn_count" => self.init.knn_count = p(key, value)?,
            "initial_opacity" => self.init.initial_opacity = p(key, value)?,
            "min_scale_floor" => self.init.min_scale_floor = p(key, value)?,
            other => return Err(Error::domain(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, file: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line: n + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            self.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                file: file.to_string(),
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; [`TrainConfig::apply_text`]
    /// reads it back.
    pub fn to_text(&self) -> String {
        let b = self.background;
        format!(
            "iterations = {}\nloss_lambda = {:?}\nposition_lr_init = {:?}\nposition_lr_final = {:?}\n\
             position_lr_max_steps = {}\nsh_dc_lr = {:?}\nsh_rest_lr = {:?}\nopacity_lr = {:?}\nscale_lr = {:?}\nrotation_lr = {:?}\n\
             densify_interval = {}\ndensify_from = {}\ndensify_until_fraction = {:?}\n\
             densify_grad_threshold = {:?}\npercent_dense = {:?}\nprune_opacity = {:?}\n\
             opacity_reset_interval = {}\nsh_degree_interval = {}\nmax_sh_degree = {}\nseed = {}\n\
             background = {:?},{:?},{:?}\nparallel = {}\nknn_count = {}\ninitial_opacity = {:?}\n\
             min_scale_floor = {:?}\n",
            self.iterations,
            self.loss_lambda,
            self.position_lr_init,
            self.position_lr_final,
            self.position_lr_max_steps,
            self.sh_dc_lr,
            self.sh_rest_lr,
            self.opacity_lr,
            self.scale_lr,
            self.rotation_lr,
            self.densify_interval,
            self.densify_from,
            self.densify_until_fraction,
            self.densify_grad_threshold,
            self.percent_dense,
            self.prune_opacity,
            self.opacity_reset_interval,
            self.sh_degree_interval,
            self.max_sh_degree,
            self.seed,
            b[0],
            b[1],
            b[2],
            self.parallel,
            self.init.knn_count,
            self.init.initial_opacity,
            self.init.min_scale_floor,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.iterations = 123;
        cfg.background = [0.1, 0.2, 0.3];
        cfg.parallel = false;
        let mut back = TrainConfig::default();
        back.apply_text(&cfg.to_text(), "cfg").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = TrainConfig::default()
            .apply_text("# c\niterations = 5\nwarp = 9\n", "cfg.txt")
            .unwrap_err();
        assert!(err.to_string().contains("cfg.txt:3"), "{err}");
    }

    #[test]
    fn position_schedule_endpoints() {
        let cfg = TrainConfig::default();
        assert!((cfg.position_lr(0, 2.0) - 3.2e-4).abs() < 1e-15);
        assert!((cfg.position_lr(30_000, 2.0) - 3.2e-6).abs() < 1e-15);
        assert_eq!(cfg.position_lr(40_000, 2.0), cfg.position_lr(30_000, 2.0));
        assert_eq!(cfg.densify_until(), 3_500);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = TrainConfig::default();
        cfg.loss_lambda = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.densify_interval = 0;
        assert!(cfg.validate().is_err());
    }
}
