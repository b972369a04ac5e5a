use crate::{CliResult, Failure};
use clap::Args;
use qls_core::model::{BuiltinCase, ModelDescriptor, NonlinearModel};
use std::path::Path;

/// Model selection shared by all subcommands.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model: built-in case (1, 2, 3, GP1, GP2, SF3) or a JSON descriptor file
    #[arg(long)]
    pub model: Option<String>,
    /// Built-in case (1, 2, 3, GP1, GP2, SF3)
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub r0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub kappa: f64,
    /// Custom nonlinearity f(s) as an expression in s
    #[arg(long, allow_hyphen_values = true)]
    pub f: Option<String>,
    /// Custom quasilinear function h(s); defaults to `s`
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<String>,
}

impl ModelArgs {
    pub fn resolve(&self) -> CliResult<NonlinearModel> {
        if let Some(f) = &self.f {
            if self.model.is_some() || self.case.is_some() {
                return Err(Failure::validation("--f cannot be combined with --model or --case"));
            }
            let h = self.h.as_deref().unwrap_or("s");
            return Ok(NonlinearModel::from_expressions(f, h, self.r0, self.kappa)?);
        }
        match (&self.model, &self.case) {
            (Some(_), Some(_)) => Err(Failure::validation("give either --model or --case, not both")),
            (Some(m), None) if Path::new(m).is_file() => {
                let text = std::fs::read_to_string(m)?;
                let d: ModelDescriptor = serde_json::from_str(&text)?;
                Ok(NonlinearModel::from_descriptor(&d)?)
            }
            (Some(name), None) | (None, Some(name)) => {
                let case = BuiltinCase::parse(name)?;
                Ok(NonlinearModel::builtin(case, self.r0, self.kappa)?)
            }
            (None, None) => Err(Failure::validation("a model is required: --case, --model or --f")),
        }
    }
}
