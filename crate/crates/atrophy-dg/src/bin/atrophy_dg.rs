fn main() {
    std::process::exit(atrophy_dg::harness::cli(std::env::args()));
}
