"""Build a small PyTorch encoder with the inference layout, export it as a
TSCX weights file and record reference outputs for the Rust parity test.

    python python/make_parity_fixture.py crates/core/tests/data
"""

import argparse
import json
import struct
import zlib
from pathlib import Path

import torch
from torch import nn


class Encoder(nn.Module):
    def __init__(self, n_in, n_out, embed, heads, layers, ff, max_tokens):
        super().__init__()
        self.heads = heads
        self.encoder = nn.Linear(n_in, embed)
        self.pos_embedding = nn.Parameter(0.1 * torch.randn(max_tokens, embed))
        self.layers = nn.ModuleList(
            nn.TransformerEncoderLayer(
                embed, heads, ff, dropout=0.0, activation="relu", batch_first=True, norm_first=True
            )
            for _ in range(layers)
        )
        self.decoder = nn.Linear(embed, n_out)

    def forward(self, tokens):
        x = self.encoder(tokens) + self.pos_embedding[: tokens.shape[1]]
        for layer in self.layers:
            x = layer(x)
        return self.decoder(x)


def write_tscx(path, tensors):
    names = list(tensors)
    payloads = [tensors[n].detach().to(torch.float32).contiguous().numpy().astype("<f4").tobytes() for n in names]
    header = b"TSCX" + struct.pack("<II", 1, len(names))
    # offsets count from the start of the payload section
    offset = 0
    directory = b""
    for name, data in zip(names, payloads):
        t = tensors[name]
        raw = name.encode()
        directory += struct.pack("<I", len(raw)) + raw + struct.pack("<BI", 0, t.dim())
        directory += struct.pack(f"<{t.dim()}I", *t.shape)
        directory += struct.pack("<QI", offset, zlib.crc32(data))
        offset += len(data)
    Path(path).write_bytes(header + directory + b"".join(payloads))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--cases", type=int, default=10)
    args = ap.parse_args()
    torch.manual_seed(args.seed)
    n_in, n_out, embed, heads, layers, max_tokens = 17, 12, 16, 2, 2, 4
    model = Encoder(n_in, n_out, embed, heads, layers, 4 * embed, max_tokens).double().eval()
    with torch.no_grad():
        for layer in model.layers:
            # non-trivial norm parameters so the affine part is exercised
            for norm in (layer.norm1, layer.norm2):
                norm.weight.add_(0.2 * torch.randn_like(norm.weight))
                norm.bias.add_(0.1 * torch.randn_like(norm.bias))

    tensors = {k: v for k, v in model.state_dict().items()}
    tensors["meta"] = torch.tensor([float(heads), 1.0, model.layers[0].norm1.eps])
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_tscx(args.out_dir / "parity_model.tscx", tensors)

    # the file stores f32, so evaluate the rounded weights
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(p.float().double())
    cases = []
    with torch.no_grad():
        for i in range(args.cases):
            n_tokens = 1 if i % 2 == 0 else 1 + i % max_tokens
            tokens = torch.randn(1, n_tokens, n_in, dtype=torch.float64)
            logits = model(tokens)[0]
            cases.append({"tokens": tokens[0].tolist(), "logits": logits.tolist()})
    fixture = {"tolerance": 1e-4, "cases": cases}
    (args.out_dir / "parity_fixture.json").write_text(json.dumps(fixture, indent=1))
    print(f"wrote {len(cases)} cases to {args.out_dir}")


if __name__ == "__main__":
    main()
