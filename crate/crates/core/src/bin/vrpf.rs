fn main() {
    std::process::exit(vrpf::experiment::cli::main());
}
