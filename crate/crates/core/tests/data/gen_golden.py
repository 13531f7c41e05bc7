#!/usr/bin/env python3
"""Builds the micro-program corpus and writes golden.json.

Architectural results and memory events come from unicorn; mnemonics from
capstone. Cycle costs are computed here from the Cortex-M0 instruction
timing table plus a one-word flash prefetch buffer, independently of the
Rust implementation.

Usage: gen_golden.py [--no-build]
"""

import json
import pathlib
import subprocess
import sys

import capstone
import unicorn
import unicorn.arm_const as A

HERE = pathlib.Path(__file__).resolve().parent
PROGRAMS = HERE / "programs"
BUILD = HERE / "elf"

FLASH_BASE, FLASH_SIZE = 0x08000000, 64 * 1024
RAM_BASE, RAM_SIZE = 0x20000000, 8 * 1024
MAX_STEPS = 100_000

CONFIGS = [
    (20, False, 0), (20, False, 1), (20, True, 0), (20, True, 1),
    (24, False, 0), (24, False, 1), (24, True, 0), (24, True, 1),
    (48, False, 1), (48, True, 1),
]

# Programs whose control flow is fully direct (branches, BL, BX lr, POP {pc}).
STATIC = {
    "alu_basic", "shifts", "muls_loop", "countdown", "literal_pool", "ram_rw",
    "stack_ops", "call_return", "nested_calls", "ldm_stm", "memcpy_flash",
    "byte_sum", "branch_chain", "fib", "gcd", "bubble_sort", "extend_rev",
    "misc_sys", "prefetch_align", "table_lookup", "crc8", "high_regs",
    "pop_pc_loop", "factorial",
}


def build():
    BUILD.mkdir(exist_ok=True)
    cc = ["clang", "--target=thumbv6m-none-eabi", "-mcpu=cortex-m0", "-c"]
    prelude = BUILD / "prelude.o"
    subprocess.run(cc + [str(PROGRAMS / "prelude.s"), "-o", str(prelude)], check=True)
    for src in sorted(PROGRAMS.glob("*.s")):
        if src.stem == "prelude":
            continue
        obj = BUILD / (src.stem + ".o")
        subprocess.run(cc + [str(src), "-o", str(obj)], check=True)
        subprocess.run(
            ["ld.lld", "-T", str(HERE / "link.ld"), str(prelude), str(obj),
             "-o", str(BUILD / (src.stem + ".elf"))],
            check=True,
        )
        obj.unlink()
    prelude.unlink()


def load_segments(path):
    """(paddr, bytes) of every PT_LOAD segment of a little-endian ELF32."""
    data = path.read_bytes()
    phoff = int.from_bytes(data[28:32], "little")
    phentsize = int.from_bytes(data[42:44], "little")
    phnum = int.from_bytes(data[44:46], "little")
    out = []
    for i in range(phnum):
        ph = data[phoff + i * phentsize: phoff + (i + 1) * phentsize]
        p_type, p_offset, _vaddr, p_paddr, p_filesz = (
            int.from_bytes(ph[k:k + 4], "little") for k in range(0, 20, 4))
        if p_type == 1 and p_filesz:
            out.append((p_paddr, data[p_offset:p_offset + p_filesz]))
    return out


def region(addr):
    if FLASH_BASE <= addr < FLASH_BASE + FLASH_SIZE:
        return "flash"
    if RAM_BASE <= addr < RAM_BASE + RAM_SIZE:
        return "ram"
    raise ValueError(f"access outside mapped memory: {addr:#x}")


def trace(path):
    """Runs to BKPT. Returns the per-instruction trace and final registers."""
    md = capstone.Cs(capstone.CS_ARCH_ARM, capstone.CS_MODE_THUMB | capstone.CS_MODE_MCLASS)
    md.detail = True
    uc = unicorn.Uc(unicorn.UC_ARCH_ARM, unicorn.UC_MODE_THUMB | unicorn.UC_MODE_MCLASS)
    uc.ctl_set_cpu_model(unicorn.arm_const.UC_CPU_ARM_CORTEX_M0)
    uc.mem_map(FLASH_BASE, FLASH_SIZE)
    uc.mem_map(RAM_BASE, RAM_SIZE)
    for addr, blob in load_segments(path):
        uc.mem_write(addr, blob)
    sp = int.from_bytes(uc.mem_read(FLASH_BASE, 4), "little")
    pc = int.from_bytes(uc.mem_read(FLASH_BASE + 4, 4), "little") & ~1

    steps = []

    def on_code(uc, address, size, _):
        code = bytes(uc.mem_read(address, size))
        insn = next(md.disasm(code, address))
        steps.append({"addr": address, "size": size, "insn": insn, "reads": [], "writes": []})
        if insn.mnemonic == "bkpt" or len(steps) > MAX_STEPS:
            uc.emu_stop()

    def on_read(uc, _access, address, _size, _value, _):
        steps[-1]["reads"].append(region(address))

    def on_write(uc, _access, address, _size, _value, _):
        steps[-1]["writes"].append(region(address))

    uc.hook_add(unicorn.UC_HOOK_CODE, on_code)
    uc.hook_add(unicorn.UC_HOOK_MEM_READ, on_read)
    uc.hook_add(unicorn.UC_HOOK_MEM_WRITE, on_write)
    uc.reg_write(A.UC_ARM_REG_SP, sp)
    # Reset flags are architecturally UNKNOWN; the simulator clears them.
    uc.reg_write(A.UC_ARM_REG_XPSR, 0x01000000)
    uc.emu_start(pc | 1, FLASH_BASE + FLASH_SIZE)
    if steps[-1]["insn"].mnemonic != "bkpt":
        raise RuntimeError(f"{path.name}: did not reach bkpt")
    # The BKPT itself was stopped before executing; it has no memory events.
    regs = [uc.reg_read(getattr(A, f"UC_ARM_REG_R{i}")) for i in range(13)]
    regs += [uc.reg_read(A.UC_ARM_REG_SP), uc.reg_read(A.UC_ARM_REG_LR)]
    xpsr = uc.reg_read(A.UC_ARM_REG_XPSR)
    flags = {k: bool(xpsr >> b & 1) for k, b in (("n", 31), ("z", 30), ("c", 29), ("v", 28))}
    return steps, regs, flags


def register_list(insn):
    return [op for op in insn.operands if op.type == capstone.arm.ARM_OP_REG]


def writes_pc(insn):
    m = insn.mnemonic
    if m in ("b", "bl", "bx", "blx") or (m.startswith("b") and len(m) == 3 and m not in ("bic", "bkpt")):
        return True
    if m == "pop":
        return any(insn.reg_name(op.reg) == "pc" for op in register_list(insn))
    if m in ("mov", "add"):
        return insn.reg_name(insn.operands[0].reg) == "pc"
    return False


def base_cycles(insn, taken):
    m = insn.mnemonic
    regs = register_list(insn)
    if m == "bl":
        return 4
    if m in ("push", "pop"):
        n = len(regs)
        return 3 + n if taken else 1 + n
    if m in ("ldm", "stm", "ldmia", "stmia"):
        return 1 + len(regs) - 1  # first operand is the base register
    if m.startswith("ldr") or m.startswith("str"):
        return 2
    if m in ("b", "bx", "blx"):
        return 3
    return 3 if taken else 1


def counters_and_cycles(steps):
    c = [0] * 6
    taken_flags = []
    for i, s in enumerate(steps):
        insn = s["insn"]
        fallthrough = s["addr"] + s["size"]
        nxt = steps[i + 1]["addr"] if i + 1 < len(steps) else fallthrough
        taken = writes_pc(insn) and insn.mnemonic != "bkpt" and (
            nxt != fallthrough or insn.mnemonic in ("b", "bl", "bx", "blx", "pop", "mov", "add"))
        taken_flags.append(taken)
        if insn.mnemonic == "muls":
            c[1] += 1
        else:
            c[0] += 1
        c[2] += taken
        c[3] += s["reads"].count("ram")
        c[4] += s["writes"].count("ram")
        c[5] += s["reads"].count("flash")
    cycles = {}
    for freq, prefetch, ws in CONFIGS:
        total = 0
        buf = None  # word address held by the prefetch buffer
        for s, taken in zip(steps, taken_flags):
            total += base_cycles(s["insn"], taken)
            for half in range(s["addr"], s["addr"] + s["size"], 2):
                if region(half) != "flash":
                    continue
                word = half & ~3
                if not prefetch:
                    total += ws
                    continue
                if buf != word:
                    total += ws
                    buf = word
                if half & 2:
                    buf = word + 4 if word + 4 < FLASH_BASE + FLASH_SIZE else None
            total += ws * s["reads"].count("flash")
            if taken:
                buf = None
        cycles[f"{freq},{'ON' if prefetch else 'OFF'},{ws}"] = total
    return c, cycles


def main():
    if "--no-build" not in sys.argv:
        build()
    golden = {}
    for elf in sorted(BUILD.glob("*.elf")):
        steps, regs, flags = trace(elf)
        c, cycles = counters_and_cycles(steps)
        golden[elf.stem] = {
            "elf": f"elf/{elf.name}",
            "static": elf.stem in STATIC,
            "instr_retired": len(steps),
            "counters": dict(zip(("c1", "c2", "c3", "c4", "c5", "c6"), c)),
            "cycles": cycles,
            "regs": regs,
            "flags": flags,
        }
    (HERE / "golden.json").write_text(json.dumps(golden, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(golden)} programs")


if __name__ == "__main__":
    main()
