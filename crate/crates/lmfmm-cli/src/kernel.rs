use clap::Args;
use lmfmm::greens::{
    make_dirichlet_scattered, make_free_space, make_impedance_scattered, make_three_layer, KernelSpec,
    ThreeLayerComponent, ThreeLayerParams,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Free,
    Dirichlet,
    Impedance,
    ThreeLayer(ThreeLayerComponent),
}

pub fn parse_kind(s: &str) -> Result<KernelKind, String> {
    Ok(match s {
        "free" => KernelKind::Free,
        "dirichlet" => KernelKind::Dirichlet,
        "impedance" => KernelKind::Impedance,
        "three-layer:s1" => KernelKind::ThreeLayer(ThreeLayerComponent::S1),
        "three-layer:s2t" => KernelKind::ThreeLayer(ThreeLayerComponent::S2t),
        "three-layer:s2b" => KernelKind::ThreeLayer(ThreeLayerComponent::S2b),
        "three-layer:s3" => KernelKind::ThreeLayer(ThreeLayerComponent::S3),
        _ => {
            return Err(format!(
                "unknown kernel '{s}', expected free, dirichlet, impedance or three-layer:{{s1,s2t,s2b,s3}}"
            ))
        }
    })
}

/// Kernel selection shared by the subcommands. Unset values fall back to the
/// subcommand's defaults.
#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// free, dirichlet, impedance, three-layer:s1, three-layer:s2t, three-layer:s2b or three-layer:s3
    #[arg(long, value_parser = parse_kind)]
    pub kernel: Option<KernelKind>,
    /// Wavenumber of the half-space kernels
    #[arg(long)]
    pub k: Option<f64>,
    /// Impedance parameter
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Wavenumber of the top layer (y > 0)
    #[arg(long)]
    pub k1: Option<f64>,
    /// Wavenumber of the middle layer (-d < y < 0)
    #[arg(long)]
    pub k2: Option<f64>,
    /// Wavenumber of the bottom layer (y < -d)
    #[arg(long)]
    pub k3: Option<f64>,
    /// Thickness of the middle layer
    #[arg(long)]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct KernelDefaults {
    pub kind: KernelKind,
    pub k: f64,
    pub alpha: f64,
    pub k123: [f64; 3],
    pub d: f64,
}

impl Default for KernelDefaults {
    fn default() -> Self {
        KernelDefaults { kind: KernelKind::Impedance, k: 1.0, alpha: 1.0, k123: [1.5, 1.0, 2.0], d: 1.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Kernel {
    pub kind: KernelKind,
    pub spec: KernelSpec,
    pub d: f64,
}

impl KernelArgs {
    pub fn resolve(&self, def: KernelDefaults) -> Result<Kernel, CliError> {
        let kind = self.kernel.unwrap_or(def.kind);
        let k = self.k.unwrap_or(def.k);
        let d = self.d.unwrap_or(def.d);
        let spec = match kind {
            KernelKind::Free => make_free_space(k),
            KernelKind::Dirichlet => make_dirichlet_scattered(k),
            KernelKind::Impedance => make_impedance_scattered(k, self.alpha.unwrap_or(def.alpha))?,
            KernelKind::ThreeLayer(c) => {
                let [k1, k2, k3] = def.k123;
                let p = ThreeLayerParams::new(self.k1.unwrap_or(k1), self.k2.unwrap_or(k2), self.k3.unwrap_or(k3), d)?;
                make_three_layer(p, c)
            }
        };
        if !(spec.k_max() > 0.0) {
            return Err(CliError::Usage(format!("wavenumbers must be positive, got {:?}", spec.wavenumbers())));
        }
        Ok(Kernel { kind, spec, d })
    }
}

impl Kernel {
    /// A height inside the target layer.
    pub fn target_centre(&self, upper: f64) -> f64 {
        match self.kind {
            KernelKind::ThreeLayer(ThreeLayerComponent::S2t | ThreeLayerComponent::S2b) => -0.5 * self.d,
            KernelKind::ThreeLayer(ThreeLayerComponent::S3) => -self.d - 0.5,
            _ => upper,
        }
    }

    /// Physical target height with canonical height `a`.
    pub fn target_for(&self, a: f64) -> f64 {
        let off = self.spec.target_height(0.0);
        let tau = self.spec.target_height(1.0) - off;
        (a - off) / tau
    }

    /// Physical source height with canonical height `b`.
    pub fn source_for(&self, b: f64) -> f64 {
        let off = self.spec.source_height(0.0);
        let s = self.spec.source_height(1.0) - off;
        (b - off) / s
    }
}
