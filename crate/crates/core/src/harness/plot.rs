//! Gnuplot scripts written next to each run's CSV files.

use super::experiments::Outcome;
use super::Experiment;

const PREAMBLE: &str = "set datafile separator ','\nset key autotitle columnhead\nset grid\n";

pub(crate) fn script(experiment: Experiment, outcome: &Outcome) -> String {
    let body = match experiment {
        Experiment::Measures => "\
set multiplot layout 2,2
set xlabel 'step'
set logscale y
plot 'measures.csv' using 2:($1==1?$3:1/0) with lines title 'd=1', \\
     '' using 2:($1==8?$3:1/0) with lines title 'd=8'
unset logscale y
set ylabel 'effective rank'
plot for [d in '1 2 4 8'] 'measures.csv' using 2:($1==d?$4:1/0) with lines title 'd='.d
set ylabel 'stable rank'
plot for [d in '1 2 4 8'] 'measures.csv' using 2:($1==d?$5:1/0) with lines title 'd='.d
set ylabel 'nuclear norm'
plot for [d in '1 2 4 8'] 'measures.csv' using 2:($1==d?$6:1/0) with lines title 'd='.d
unset multiplot
"
        .to_string(),
        Experiment::Theorem1 => "\
set multiplot layout 1,2
set xlabel 'depth'
set ylabel 'differential effective rank'
plot 'theorem1.csv' using 1:2 with linespoints notitle
set xlabel 'singular value'
set ylabel 'density'
plot for [d=1:8] 'density.csv' using 3:($1==d?$4:1/0) with lines title 'L='.d
unset multiplot
"
        .to_string(),
        Experiment::Rankdist => "\
set xlabel 'effective rank'
set ylabel 'density'
plot for [d in '1 2 4 6'] 'rankdist_pdf.csv' using 3:(strcol(1) eq 'normal' && $2==d ? $5 : 1/0) \\
     with lines title 'd='.d
"
        .to_string(),
        Experiment::Leastsq => leastsq_body(outcome),
        Experiment::DynamicsCheck => "\
set multiplot layout 1,2
set logscale xy
set xlabel 'eta'
set ylabel 'residual'
plot for [d=2:4] 'residual.csv' using 3:($1==d?$4:1/0) with points title 'd='.d
unset logscale
set xlabel 'step'
set ylabel 'effective rank'
plot 'rank_trajectory.csv' using 1:2 with lines title 'measured', '' using 1:3 with points title 'recurrence'
unset multiplot
"
        .to_string(),
        Experiment::Landscape => "\
set view map
set xlabel 'alpha'
set ylabel 'beta'
set multiplot layout 1,2
splot 'landscape.csv' using 1:2:3 with points palette pointtype 5 title 'single layer'
splot 'landscape.csv' using 1:2:4 with points palette pointtype 5 title 'two layers'
unset multiplot
"
        .to_string(),
        Experiment::ResnetRank => "\
set logscale x 2
set xlabel 'depth'
set ylabel 'effective rank (median)'
plot 'resnet_rank_median.csv' using 1:2 with linespoints title 'plain', '' using 1:3 with linespoints title 'residual'
"
        .to_string(),
        Experiment::ExpandVerify => "\
set logscale y
set xlabel 'expansion depth'
set ylabel 'deviation'
plot 'expand_conv.csv' using 1:2 with linespoints title 'collapse', '' using 1:3 with linespoints title 'chain'
"
        .to_string(),
        Experiment::RankRelation => "\
set xlabel 'weight effective rank'
set ylabel 'kernel effective rank'
plot 'rank_relation.csv' using 3:4:1 with points palette notitle
"
        .to_string(),
    };
    format!("# {experiment}\n{PREAMBLE}{body}")
}

fn leastsq_body(outcome: &Outcome) -> String {
    if outcome.table("loss_grid").is_some() {
        "\
set logscale y
set xlabel 'step'
set ylabel 'training loss'
plot for [d in '1 8 32'] 'loss_curves.csv' using 4:($1==d && $2==64 && $3==0 ? $5 : 1/0) \\
     with lines title 'depth '.d.', rank 64'
"
        .to_string()
    } else {
        let name = if outcome.table("trained_rank").is_some() { "trained_rank" } else { "optimizer_rank" };
        format!(
            "\
set xlabel 'depth'
set ylabel 'Gram effective rank (median)'
plot '{name}_median.csv' using 2:3 with linespoints notitle
"
        )
    }
}
