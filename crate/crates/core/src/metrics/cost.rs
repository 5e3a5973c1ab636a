use serde::Serialize;

use crate::models::{LayerInfo, ModelGraph};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub model: String,
    pub params: u64,
    pub flops: u64,
}

impl CostRow {
    pub fn from_layers(model: &str, layers: &[LayerInfo]) -> Self {
        CostRow {
            model: model.to_string(),
            params: layers.iter().map(|l| l.params as u64).sum(),
            flops: layers.iter().map(|l| l.flops).sum(),
        }
    }

    pub fn gflops(&self) -> f64 {
        self.flops as f64 / 1e9
    }

    pub fn params_millions(&self) -> f64 {
        self.params as f64 / 1e6
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

pub fn cost_report<'a>(graphs: impl IntoIterator<Item = (&'a str, &'a ModelGraph)>) -> CostReport {
    CostReport { rows: graphs.into_iter().map(|(name, g)| CostRow::from_layers(name, g.layers())).collect() }
}

impl CostReport {
    /// Models as columns, `GFlops` and parameter rows.
    pub fn to_table_csv(&self) -> String {
        let mut out = String::from("metric");
        for r in &self.rows {
            out.push_str(&format!(",{}", r.model));
        }
        out.push_str("\nGFlops");
        for r in &self.rows {
            out.push_str(&format!(",{:.6}", r.gflops()));
        }
        out.push_str("\nNumber of Parameters (M)");
        for r in &self.rows {
            out.push_str(&format!(",{:.6}", r.params_millions()));
        }
        out.push('\n');
        out
    }

    /// One row per model with exact counts.
    pub fn to_rows_csv(&self) -> String {
        let mut out = String::from("model,params,flops,gflops\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{:.6}\n", r.model, r.params, r.flops, r.gflops()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_is_a_zero_row() {
        let r = CostRow::from_layers("none", &[]);
        assert_eq!((r.params, r.flops), (0, 0));
    }

    #[test]
    fn table_layout() {
        let rep = CostReport {
            rows: vec![
                CostRow { model: "A".into(), params: 46_000, flops: 38_000_000 },
                CostRow { model: "B".into(), params: 1, flops: 2 },
            ],
        };
        let csv = rep.to_table_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "metric,A,B");
        assert_eq!(lines[1], "GFlops,0.038000,0.000000");
        assert_eq!(lines[2], "Number of Parameters (M),0.046000,0.000001");
    }
}
