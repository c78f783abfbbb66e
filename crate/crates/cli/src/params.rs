//! Per-command parameter records.
//!
//! Every record exists twice: a flag/config form where each field is
//! optional, and a resolved form with defaults filled in. The resolved form
//! is what lands in the manifest, so feeding a manifest back as `--config`
//! reproduces the run.

use serde::{Deserialize, Serialize};

pub trait Resolve {
    type Output;

    fn resolve(self) -> Self::Output;
}

macro_rules! params {
    (
        $(#[$smeta:meta])*
        $flags:ident => $resolved:ident {
            $( $(#[$fmeta:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)?
        }
    ) => {
        $(#[$smeta])*
        #[derive(clap::Args, Serialize, Deserialize, Default, Debug, Clone)]
        #[serde(deny_unknown_fields)]
        pub struct $flags {
            $(
                $(#[$fmeta])*
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        #[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
        pub struct $resolved {
            $( pub $field: $ty, )*
        }

        impl Resolve for $flags {
            type Output = $resolved;

            fn resolve(self) -> $resolved {
                $resolved {
                    $( $field: self.$field.unwrap_or_else(|| $default), )*
                }
            }
        }
    };
}

params! {
    /// Generate a modulation path.
    GenPathArgs => GenPath {
        /// fbm or linear
        #[arg(long)]
        kind: String = "fbm".to_string(),
        #[arg(long)]
        hurst: f64 = 0.5,
        #[arg(long)]
        slope: f64 = 1.0,
        /// Number of samples.
        #[arg(long)]
        n: usize = 1025,
        #[arg(long)]
        dt: f64 = 1.0 / 1024.0,
        #[arg(skip)]
        seed: u64 = 0,
    }
}

params! {
    /// Grid estimate of the irregularity norm of a path file.
    IrregularityArgs => Irregularity {
        #[arg(long)]
        path: String = String::new(),
        #[arg(long)]
        rho: f64 = 0.75,
        #[arg(long)]
        gamma: f64 = 0.55,
        #[arg(long)]
        amax: f64 = 100.0,
        #[arg(long)]
        apoints: usize = 201,
        #[arg(long)]
        stride: usize = 1,
        #[arg(skip)]
        seed: u64 = 0,
    }
}

params! {
    /// Euler convergence rate on the scalar problem dψ = i ψ dw.
    EulerRateArgs => EulerRate {
        #[arg(long)]
        hurst: f64 = 0.75,
        #[arg(long = "T")]
        t_end: f64 = 1.0,
        /// Samples of the fBm path.
        #[arg(long)]
        samples: usize = 32769,
        #[arg(long = "n", value_delimiter = ',')]
        n_list: Vec<usize> = vec![64, 128, 256, 512, 1024, 2048, 4096],
        #[arg(skip)]
        seed: u64 = 0,
    }
}

params! {
    /// Torus problem shared by solve, galerkin and mod-continuity.
    SolveArgs => Solve {
        /// cubic or dnls
        #[arg(long)]
        equation: String = "cubic".to_string(),
        #[arg(long)]
        theta: f64 = 1.0,
        #[arg(long = "N")]
        cutoff: usize = 16,
        #[arg(long = "T")]
        t_end: f64 = 1.0,
        /// euler or picard
        #[arg(long)]
        scheme: String = "euler".to_string(),
        #[arg(long)]
        steps: usize = 1024,
        #[arg(long)]
        picard_tol: f64 = 1e-7,
        #[arg(long)]
        picard_base: usize = 32,
        #[arg(long)]
        picard_depth: usize = 14,
        #[arg(long)]
        picard_max_iter: usize = 50,
        #[arg(long)]
        alpha: f64 = 0.5,
        /// Sign in front of the nonlinearity.
        #[arg(long, allow_hyphen_values = true)]
        sign: f64 = 1.0,
        #[arg(long)]
        record_every: usize = 1,
        /// fbm:H, linear:S or file:PATH
        #[arg(long)]
        modulation: String = "fbm:0.35".to_string(),
        #[arg(long)]
        path_samples: usize = 8193,
        /// gaussian, random or single:K
        #[arg(long)]
        initial: String = "gaussian".to_string(),
        #[arg(long)]
        initial_l2: f64 = 1.0,
        /// Projection cutoffs for galerkin.
        #[arg(long = "L", value_delimiter = ',')]
        l_list: Vec<usize> = vec![4, 8, 12, 16],
        /// Mollifier widths 2^-j for mod-continuity.
        #[arg(long, value_delimiter = ',')]
        scales: Vec<i32> = vec![3, 4, 5, 6, 7],
        /// Number of modulation seeds for mod-continuity.
        #[arg(long)]
        seeds: usize = 10,
        #[arg(skip)]
        seed: u64 = 0,
    }
}

params! {
    /// Timing and Hölder fit of the cubic kernel.
    XBenchArgs => XBench {
        #[arg(long = "N")]
        cutoff: usize = 32,
        #[arg(long)]
        pairs: usize = 16,
        #[arg(long)]
        modulation: String = "fbm:0.4".to_string(),
        #[arg(long)]
        path_samples: usize = 4097,
        #[arg(skip)]
        seed: u64 = 0,
    }
}

params! {
    /// Strichartz ratios of the modulated Duhamel term on the line.
    StrichartzArgs => Strichartz {
        #[arg(long)]
        p: f64 = 5.0,
        #[arg(long = "T", value_delimiter = ',')]
        t_list: Vec<f64> = vec![0.125, 0.25, 0.5, 1.0],
        #[arg(long)]
        seeds: usize = 10,
        #[arg(long)]
        modulation: String = "fbm:0.4".to_string(),
        #[arg(long)]
        path_samples: usize = 8193,
        #[arg(long)]
        points: usize = 4096,
        #[arg(long)]
        box_length: f64 = 64.0,
        #[arg(long)]
        quad_points: usize = 256,
        /// Width of the Gaussian source.
        #[arg(long)]
        sigma: f64 = 1.0,
        /// Order alpha of the squared-field smoothing diagnostic; 0 disables it.
        #[arg(long)]
        smoothing: f64 = 0.0,
        #[arg(skip)]
        seed: u64 = 0,
    }
}

params! {
    /// Mild solution of the power-type equation on the line.
    NlsLineArgs => NlsLine {
        #[arg(long)]
        mu: f64 = 4.0,
        #[arg(long = "T")]
        t_end: f64 = 0.5,
        #[arg(long)]
        steps: usize = 64,
        #[arg(long)]
        tol: f64 = 1e-13,
        #[arg(long)]
        modulation: String = "fbm:0.4".to_string(),
        #[arg(long)]
        path_samples: usize = 4097,
        #[arg(long)]
        points: usize = 4096,
        #[arg(long)]
        box_length: f64 = 64.0,
        #[arg(long)]
        sigma: f64 = 1.0,
        #[arg(long)]
        initial_l2: f64 = 0.3,
        #[arg(long)]
        track_h1: bool = true,
        #[arg(skip)]
        seed: u64 = 0,
    }
}

params! {
    /// Gagliardo–Nirenberg ratios over a random corpus.
    GnArgs => Gn {
        #[arg(long)]
        p: f64 = 4.0,
        #[arg(long)]
        eps: f64 = 0.1,
        #[arg(long)]
        corpus: usize = 100,
        #[arg(long)]
        points: usize = 16384,
        #[arg(long)]
        box_length: f64 = 256.0,
        #[arg(long, value_delimiter = ',')]
        scales: Vec<f64> = vec![0.25, 1.0, 4.0],
        #[arg(skip)]
        seed: u64 = 0,
    }
}
