fn main() {
    permsafe::cli::main_exit()
}
