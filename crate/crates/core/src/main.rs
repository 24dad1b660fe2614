fn main() {
    std::process::exit(posemetric::cli::run());
}
