//! Simulate one panel from the first built-in design and test every block.

use granger_lasso::inference::{granger_lasso_tests, TestSettings};
use granger_lasso::simulation::{builtin_design, simulate, Hypothesis};
use granger_lasso::BlockId;

fn main() -> granger_lasso::Result<()> {
    let design = builtin_design(1)?;
    let (y, x) = simulate(&design, Hypothesis::Alternative, 7);
    let blocks = design.blocks();
    let ids: Vec<BlockId> = blocks.ids().collect();
    let settings = TestSettings {
        b: 200,
        ..TestSettings::default()
    };
    for r in granger_lasso_tests(&y, &x, &blocks, &ids, &settings, 11)? {
        println!("{:>8}  Q = {:>10.3}  mid p = {:.3}  (p = {})", r.block, r.q, r.mid_p, r.p_used);
    }
    Ok(())
}
