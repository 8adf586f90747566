// ASF vs SCF: instrumented score evaluations and wall time over the
// default grid.

use asf::baselines::{default_grid, run_bench, write_bench_csv, BenchRow, BenchSettings, Method};

pub fn run_example() -> asf::Result<Vec<BenchRow>> {
    let settings = BenchSettings::default();
    let rows = run_bench(&default_grid(), &settings)?;
    let mut out = Vec::new();
    write_bench_csv(&rows, "example", &mut out).expect("writing to memory");
    print!("{}", String::from_utf8_lossy(&out));
    for pair in rows.chunks(2) {
        let (a, s) = (&pair[0], &pair[1]);
        assert_eq!((a.method, s.method), (Method::Asf, Method::Scf));
        println!(
            "N_p={:3} n_p={} n_td={}  SCF/ASF time {:.1}x",
            a.point.num_patches,
            a.point.n_p,
            a.point.n_td,
            s.count.wall_time_ns as f64 / a.count.wall_time_ns as f64
        );
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("benchmark");
}
