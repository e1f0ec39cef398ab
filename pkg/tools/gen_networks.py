"""Regenerate the shipped benchmark network files under src/tenantsim/networks.

Layer shapes follow the public architecture definitions of each model.
Concatenations are free (no layer); pooling, residual adds and reorg are
MEM layers.

    python3 tools/gen_networks.py
"""

from pathlib import Path

import yaml

OUT = Path(__file__).resolve().parent.parent / "src" / "tenantsim" / "networks"


class Net:
    def __init__(self, name, h, w, c):
        self.name = name
        self.layers = []
        self.shape = (h, w, c)

    def conv(self, name, oc, k, stride=1, pad=None, src=None, set_shape=True):
        h, w, c = src or self.shape
        pad = k // 2 if pad is None else pad
        oh = (h + 2 * pad - k) // stride + 1
        ow = (w + 2 * pad - k) // stride + 1
        self.layers.append({"name": name, "kind": "COMPUTE",
                            "dims": {"out": [oh, ow, oc], "kernel": [k, k, c], "input": [h, w, c]}})
        if set_shape:
            self.shape = (oh, ow, oc)
        return (oh, ow, oc)

    def fc(self, name, n_out):
        n_in = self.shape[0] * self.shape[1] * self.shape[2]
        self.layers.append({"name": name, "kind": "COMPUTE",
                            "dims": {"out": [1, 1, n_out], "kernel": [1, 1, n_in], "input": [1, 1, n_in]}})
        self.shape = (1, 1, n_out)

    def pool(self, name, k, stride, pad=0, src=None, set_shape=True, ceil=False):
        h, w, c = src or self.shape
        if ceil:
            oh = -(-(h + 2 * pad - k) // stride) + 1
            ow = -(-(w + 2 * pad - k) // stride) + 1
        else:
            oh = (h + 2 * pad - k) // stride + 1
            ow = (w + 2 * pad - k) // stride + 1
        self.layers.append({"name": name, "kind": "MEM",
                            "dims": {"input": [h, w, c], "out": [oh, ow, c]}})
        if set_shape:
            self.shape = (oh, ow, c)
        return (oh, ow, c)

    def gpool(self, name):
        h, w, c = self.shape
        self.layers.append({"name": name, "kind": "MEM",
                            "dims": {"input": [h, w, c], "out": [1, 1, c]}})
        self.shape = (1, 1, c)

    def add(self, name, shape=None):
        s = list(shape or self.shape)
        self.layers.append({"name": name, "kind": "MEM",
                            "dims": {"input": s, "input_b": s, "out": s}})

    def dump(self):
        doc = {"name": self.name, "element_bytes": 1, "layers": self.layers}
        (OUT / f"{self.name}.yaml").write_text(yaml.safe_dump(doc, sort_keys=False, width=120, default_flow_style=None))


def alexnet():
    n = Net("alexnet", 224, 224, 3)
    n.conv("conv1", 64, 11, stride=4, pad=2)
    n.pool("pool1", 3, 2)
    n.conv("conv2", 192, 5)
    n.pool("pool2", 3, 2)
    n.conv("conv3", 384, 3)
    n.conv("conv4", 256, 3)
    n.conv("conv5", 256, 3)
    n.pool("pool5", 3, 2)
    n.fc("fc6", 4096)
    n.fc("fc7", 4096)
    n.fc("fc8", 1000)
    return n


def squeezenet():
    # SqueezeNet v1.1
    n = Net("squeezenet", 224, 224, 3)
    n.conv("conv1", 64, 3, stride=2, pad=0)
    n.pool("pool1", 3, 2, ceil=True)

    def fire(i, s, e):
        n.conv(f"fire{i}_squeeze", s, 1)
        src = n.shape
        n.conv(f"fire{i}_expand1x1", e, 1, src=src, set_shape=False)
        h, w, _ = n.conv(f"fire{i}_expand3x3", e, 3, src=src, set_shape=False)
        n.shape = (h, w, 2 * e)

    fire(2, 16, 64)
    fire(3, 16, 64)
    n.pool("pool3", 3, 2, ceil=True)
    fire(4, 32, 128)
    fire(5, 32, 128)
    n.pool("pool5", 3, 2, ceil=True)
    fire(6, 48, 192)
    fire(7, 48, 192)
    fire(8, 64, 256)
    fire(9, 64, 256)
    n.conv("conv10", 1000, 1)
    n.gpool("avgpool")
    return n


def yololite():
    n = Net("yololite", 224, 224, 3)
    for i, c in enumerate((16, 32, 64, 128, 128), start=1):
        n.conv(f"conv{i}", c, 3)
        n.pool(f"pool{i}", 2, 2)
    n.conv("conv6", 256, 3)
    n.conv("conv7", 125, 1)
    return n


def kws():
    # res26: 101x40 MFCC input, 45 feature maps, 2x2 average pool, 12 residual blocks
    n = Net("kws", 101, 40, 1)
    n.conv("conv0", 45, 3)
    n.pool("pool0", 2, 2)
    for b in range(1, 13):
        n.conv(f"res{b}_conv1", 45, 3)
        n.conv(f"res{b}_conv2", 45, 3)
        n.add(f"res{b}_add")
    n.gpool("avgpool")
    n.fc("fc", 12)
    return n


def googlenet():
    n = Net("googlenet", 224, 224, 3)
    n.conv("conv1", 64, 7, stride=2, pad=3)
    n.pool("pool1", 3, 2, ceil=True)
    n.conv("conv2_reduce", 64, 1)
    n.conv("conv2", 192, 3)
    n.pool("pool2", 3, 2, ceil=True)

    def inception(tag, c1, r3, c3, r5, c5, pp):
        src = n.shape
        h, w, _ = n.conv(f"inc{tag}_1x1", c1, 1, src=src, set_shape=False)
        s = n.conv(f"inc{tag}_3x3_reduce", r3, 1, src=src, set_shape=False)
        n.conv(f"inc{tag}_3x3", c3, 3, src=s, set_shape=False)
        s = n.conv(f"inc{tag}_5x5_reduce", r5, 1, src=src, set_shape=False)
        n.conv(f"inc{tag}_5x5", c5, 5, src=s, set_shape=False)
        s = n.pool(f"inc{tag}_pool", 3, 1, pad=1, src=src, set_shape=False)
        n.conv(f"inc{tag}_pool_proj", pp, 1, src=s, set_shape=False)
        n.shape = (h, w, c1 + c3 + c5 + pp)

    inception("3a", 64, 96, 128, 16, 32, 32)
    inception("3b", 128, 128, 192, 32, 96, 64)
    n.pool("pool3", 3, 2, ceil=True)
    inception("4a", 192, 96, 208, 16, 48, 64)
    inception("4b", 160, 112, 224, 24, 64, 64)
    inception("4c", 128, 128, 256, 24, 64, 64)
    inception("4d", 112, 144, 288, 32, 64, 64)
    inception("4e", 256, 160, 320, 32, 128, 128)
    n.pool("pool4", 3, 2, ceil=True)
    inception("5a", 256, 160, 320, 32, 128, 128)
    inception("5b", 384, 192, 384, 48, 128, 128)
    n.gpool("avgpool")
    n.fc("fc", 1000)
    return n


def resnet50():
    n = Net("resnet50", 224, 224, 3)
    n.conv("conv1", 64, 7, stride=2, pad=3)
    n.pool("pool1", 3, 2, pad=1)
    for stage, (blocks, width) in enumerate(((3, 64), (4, 128), (6, 256), (3, 512)), start=2):
        for b in range(blocks):
            stride = 2 if (b == 0 and stage > 2) else 1
            src = n.shape
            tag = f"res{stage}{chr(ord('a') + b)}"
            n.conv(f"{tag}_branch2a", width, 1)
            n.conv(f"{tag}_branch2b", width, 3, stride=stride)
            out = n.conv(f"{tag}_branch2c", width * 4, 1)
            if b == 0:
                n.conv(f"{tag}_branch1", width * 4, 1, stride=stride, src=src, set_shape=False)
            n.add(f"{tag}_add", out)
    n.gpool("avgpool")
    n.fc("fc", 1000)
    return n


def yolov2():
    n = Net("yolov2", 416, 416, 3)
    n.conv("conv1", 32, 3)
    n.pool("pool1", 2, 2)
    n.conv("conv2", 64, 3)
    n.pool("pool2", 2, 2)
    n.conv("conv3", 128, 3)
    n.conv("conv4", 64, 1)
    n.conv("conv5", 128, 3)
    n.pool("pool5", 2, 2)
    n.conv("conv6", 256, 3)
    n.conv("conv7", 128, 1)
    n.conv("conv8", 256, 3)
    n.pool("pool8", 2, 2)
    n.conv("conv9", 512, 3)
    n.conv("conv10", 256, 1)
    n.conv("conv11", 512, 3)
    n.conv("conv12", 256, 1)
    passthrough = n.conv("conv13", 512, 3)
    n.pool("pool13", 2, 2)
    n.conv("conv14", 1024, 3)
    n.conv("conv15", 512, 1)
    n.conv("conv16", 1024, 3)
    n.conv("conv17", 512, 1)
    n.conv("conv18", 1024, 3)
    n.conv("conv19", 1024, 3)
    h, w, c = n.conv("conv20", 1024, 3)
    s = n.conv("conv21_route", 64, 1, src=passthrough, set_shape=False)
    n.layers.append({"name": "reorg", "kind": "MEM",
                     "dims": {"input": list(s), "out": [s[0] // 2, s[1] // 2, s[2] * 4]}})
    n.shape = (h, w, c + s[2] * 4)
    n.conv("conv22", 1024, 3)
    n.conv("conv23", 425, 1)
    return n


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for build in (alexnet, squeezenet, yololite, kws, googlenet, resnet50, yolov2):
        net = build()
        net.dump()
        print(f"{net.name}: {len(net.layers)} layers")
