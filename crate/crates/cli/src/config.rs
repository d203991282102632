//! Layering of the TOML config file and command-line flags into a [`RunConfig`].

use std::path::Path;

use anyhow::Context;
use netlab::report::RunConfig;

use crate::{Failure, OutputArgs, PriceArgs, TransferArgs};

/// Reads the config file, or returns the defaults when there is none.
pub fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(Failure::Data)?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("invalid config {}: {}", path.display(), e.message())))
}

pub fn apply_transfers(cfg: &mut RunConfig, args: &TransferArgs) {
    if let Some(p) = &args.transfers {
        cfg.transfers = Some(p.clone());
    }
    cfg.strict |= args.strict;
    cfg.include_mint_burn |= args.include_mint_burn;
}

pub fn apply_prices(cfg: &mut RunConfig, args: &PriceArgs) {
    if let Some(p) = &args.prices {
        cfg.prices = Some(p.clone());
    }
    if let Some(w) = args.window {
        cfg.lppl.initial_span = w;
    }
    if let Some(s) = args.step {
        cfg.lppl.step = s;
    }
    if let Some(r) = args.resampling {
        cfg.lppl.resampling = r;
    }
    if args.from.is_some() {
        cfg.from = args.from;
    }
    if args.to.is_some() {
        cfg.to = args.to;
    }
}

pub fn apply_output(cfg: &mut RunConfig, args: &OutputArgs) {
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
}

/// Checks settings that the library would otherwise reject later as data errors.
pub fn validate(cfg: &RunConfig) -> Result<(), Failure> {
    cfg.article_rank.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    cfg.lppl.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if let (Some(from), Some(to)) = (cfg.from, cfg.to) {
        if to < from {
            return Err(Failure::Usage(format!("--to {to} is before --from {from}")));
        }
    }
    Ok(())
}
