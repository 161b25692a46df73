//! Figure configs shipped inside the binary.

pub struct ShippedConfig {
    pub file: &'static str,
    pub description: &'static str,
    pub json: &'static str,
}

macro_rules! shipped {
    ($($file:literal => $desc:literal),* $(,)?) => {
        &[$(ShippedConfig { file: $file, description: $desc, json: include_str!(concat!("../../../configs/", $file)) }),*]
    };
}

pub const SHIPPED: &[ShippedConfig] = shipped![
    "fig2.json" => "chain_steady: N=30, d=λ₀/40, Ω_p=Γ₀, superradiant drive",
    "fig2_d70.json" => "chain_steady: N=30, d=λ₀/70, Ω_p=Γ₀, superradiant drive",
    "fig3.json" => "chain_steady: d=0.05λ₀, sweep over N",
    "fig4.json" => "chain_steady: N=30, sweep over d",
    "fig5.json" => "chain_statistics: N=9, full model, superradiant drive, sweep over d",
    "fig5_subradiant.json" => "chain_statistics: N=9, full model, subradiant drive, sweep over d",
    "figS1.json" => "dispersion: N=50, d=0.05λ₀ against the infinite chain",
    "figS2.json" => "pulse_subradiant: N=12, d=λ₀/20, Gaussian pulse to Γ₀t=150",
    "figS3.json" => "ring_pair: 4+4 emitters, d=0.02λ₀, only the first ring driven",
    "figS3e.json" => "ring_pair: sweep over the undriven ring size",
    "figS4.json" => "tilted_polarization: 14+14 emitters, ε_x=0.1, Ω_p=20Γ₀, circular drive along z",
    "figS5.json" => "model_comparison: N=5, d=0.05λ₀, truncated vs full over Ω_p",
    "figS6.json" => "disorder_sweep: N∈{5,10,15}, d=λ₀/40, ε/d∈{0.02,0.1}, 100 realizations",
];

/// Shipped config by file name, with or without the `.json` suffix.
pub fn find(name: &str) -> Option<&'static ShippedConfig> {
    SHIPPED.iter().find(|p| p.file == name || p.file.strip_suffix(".json") == Some(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_shipped_config_parses_and_validates() {
        for p in SHIPPED {
            let cfg = crate::parse_config_str(p.json, &[]).unwrap_or_else(|e| panic!("{}: {e}", p.file));
            let preset = p.description.split(':').next().unwrap();
            assert_eq!(cfg.preset, preset, "{}", p.file);
        }
        assert!(find("fig2").is_some() && find("figS5.json").is_some() && find("fig9").is_none());
    }
}
