//! Clopper-Pearson intervals from the beta-quantile form, checked against the
//! binomial tail sums they invert.

use pacconf::binom::{clopper_pearson, clopper_pearson_tail_oracle, BernoulliCounts};

fn main() -> pacconf::Result<()> {
    println!("{:>4} {:>5} {:>6}  {:>18} {:>18}  {:>9}", "s", "n", "alpha", "lo", "hi", "tail diff");
    for (s, n) in [(0, 10), (5, 10), (10, 10), (3, 100), (970, 1000)] {
        for alpha in [0.05, 0.01] {
            let counts = BernoulliCounts::new(s, n)?;
            let ci = clopper_pearson(counts, alpha)?;
            let tail = clopper_pearson_tail_oracle(counts, alpha)?;
            let diff = (ci.lo() - tail.lo()).abs().max((ci.hi() - tail.hi()).abs());
            println!("{s:>4} {n:>5} {alpha:>6}  {:>18.15} {:>18.15}  {diff:>9.1e}", ci.lo(), ci.hi());
        }
    }
    Ok(())
}
