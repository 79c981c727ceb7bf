fn main() -> std::process::ExitCode {
    hmmlab::cli::main_entry()
}
