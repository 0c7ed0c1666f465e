#!/usr/bin/env python3
"""Masked-language-model stand-in: fixed fillers per keyword."""
import json
import sys

FILLERS = {
    "eyes": ["Blue", "brown", "blue", " Narrow ", "green", "big"],
    "hair": ["black", "blond", "wavy", "grey"],
}


def main():
    request = json.load(sys.stdin)
    if request["op"] == "info":
        json.dump({"model_id": "fake-mlm"}, sys.stdout)
        return
    sentence = request["sentence"]
    tokens = []
    for keyword, fillers in FILLERS.items():
        if keyword in sentence.split():
            tokens = fillers
    json.dump({"tokens": tokens[: request["top_k"]]}, sys.stdout)


if __name__ == "__main__":
    main()
