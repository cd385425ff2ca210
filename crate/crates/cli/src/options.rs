//! Flag value types. Each parses from the same spelling on the command line
//! and in a config file.

use std::str::FromStr;

use clap::ValueEnum;
use treeorg::biorg::Stopping;
use treeorg::embedding::MetricKind;
use treeorg::io::Delimiter;
use treeorg::metrics::WeightScheme;
use treeorg::transforms::TransformKind;
use treeorg::Axis;

macro_rules! from_str_via_value_enum {
    ($($t:ty),*) => {$(
        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                <$t as ValueEnum>::from_str(s, false)
            }
        }
    )*};
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Rows,
    Cols,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::Rows => Axis::Rows,
            AxisArg::Cols => Axis::Cols,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RefineArg {
    Rows,
    Cols,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    DataDriven,
    Size,
    Level,
}

impl WeightsArg {
    pub fn scheme(self, alpha: f64, beta: f64) -> WeightScheme {
        match self {
            WeightsArg::DataDriven => WeightScheme::DataDriven,
            WeightsArg::Size => WeightScheme::SizeBeta { beta },
            WeightsArg::Level => WeightScheme::LevelAlphaBeta { alpha, beta },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Correlation,
    Euclidean,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> MetricKind {
        match m {
            MetricArg::Correlation => MetricKind::Correlation,
            MetricArg::Euclidean => MetricKind::Euclidean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StoppingArg {
    /// Run every iteration.
    Fixed,
    /// Stop once coherence stops decreasing.
    Coherence,
}

impl From<StoppingArg> for Stopping {
    fn from(s: StoppingArg) -> Stopping {
        match s {
            StoppingArg::Fixed => Stopping::FixedIterations,
            StoppingArg::Coherence => Stopping::CoherenceDecrease,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    Structure,
    Averaging,
    Difference,
}

impl From<TransformArg> for TransformKind {
    fn from(t: TransformArg) -> TransformKind {
        match t {
            TransformArg::Structure => TransformKind::Structure,
            TransformArg::Averaging => TransformKind::Averaging,
            TransformArg::Difference => TransformKind::Difference,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Blocks,
    Subpopulations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DelimiterArg {
    Comma,
    Tab,
}

impl From<DelimiterArg> for Delimiter {
    fn from(d: DelimiterArg) -> Delimiter {
        match d {
            DelimiterArg::Comma => Delimiter::Comma,
            DelimiterArg::Tab => Delimiter::Tab,
        }
    }
}

from_str_via_value_enum!(
    AxisArg,
    RefineArg,
    WeightsArg,
    MetricArg,
    StoppingArg,
    TransformArg,
    KindArg,
    DelimiterArg
);

/// Parses `RxC` into two positive counts.
pub fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected RxC, got {s:?}"))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| format!("expected a positive count in {s:?}"))
    };
    Ok((parse(a)?, parse(b)?))
}
