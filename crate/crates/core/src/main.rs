fn main() -> std::process::ExitCode {
    sclab::cli::main_with_args()
}
