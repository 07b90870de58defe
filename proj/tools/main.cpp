#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "miniformer/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"miniformer: a Bi-LSTM + attention translation toolkit with a matched "
                 "Transformer baseline"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "run configuration file")->required();

    std::string checkpoint_path, input_path, output_path;
    std::size_t max_len = 0;
    auto* translate = app.add_subcommand("translate", "greedy-decode a file line by line");
    translate->add_option("--checkpoint", checkpoint_path, "checkpoint produced by train")
        ->required();
    translate->add_option("--in", input_path, "input text, one sentence per line")->required();
    translate->add_option("--out", output_path, "output file, one line per input line")
        ->required();
    translate->add_option("--max-len", max_len, "decode length cap (default: model max_len)");

    std::string hyp_path, ref_path;
    bool cumulative = false, sentence = false;
    auto* score = app.add_subcommand("score", "BLEU-1..4 and ROUGE-1/2/L against references");
    score->add_option("--hyp", hyp_path, "hypothesis file")->required();
    score->add_option("--ref", ref_path, "reference file")->required();
    score->add_flag("--cumulative", cumulative, "cumulative geometric-mean BLEU");
    score->add_flag("--sentence", sentence, "mean of per-sentence scores");

    std::string params_config;
    auto* params = app.add_subcommand("params", "parameter counts vs the matched transformer");
    params->add_option("--config", params_config, "run configuration file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return miniformer::cli::cmd_train(config_path, std::cout, std::cerr);
        if (translate->parsed())
            return miniformer::cli::cmd_translate(checkpoint_path, input_path, output_path,
                                                  max_len, std::cout, std::cerr);
        if (score->parsed())
            return miniformer::cli::cmd_score(hyp_path, ref_path, cumulative, sentence, std::cout,
                                              std::cerr);
        if (params->parsed())
            return miniformer::cli::cmd_params(params_config, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
