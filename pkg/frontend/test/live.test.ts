// @vitest-environment happy-dom
//
// Round-trip against a live chat-service: the Python server is built
// and spawned for real, and the console drives it through the DOM.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ChatConsole } from "../src/main.js";

const PYTHON = process.env.ATXF_PYTHON ?? "python3";

function pythonHasAtxf(): boolean {
  const probe = spawnSync(PYTHON, ["-c", "import atxf"], { timeout: 30_000 });
  return probe.status === 0;
}

const enabled = pythonHasAtxf();
const maybe = enabled ? describe : describe.skip;

let server: ChildProcess | null = null;
let baseUrl = "";
let fixtureDir = "";

async function until(check: () => boolean, ms = 15_000): Promise<void> {
  const deadline = Date.now() + ms;
  while (!check()) {
    if (Date.now() > deadline) {
      throw new Error("condition not reached in time");
    }
    await new Promise((r) => setTimeout(r, 25));
  }
}

maybe("live chat-service round trip", () => {
  beforeAll(async () => {
    fixtureDir = mkdtempSync(join(tmpdir(), "atxf-live-"));
    const build = spawnSync(
      PYTHON, [join(__dirname, "make_fixture.py"), fixtureDir],
      { timeout: 240_000, stdio: "pipe" });
    if (build.status !== 0) {
      throw new Error(`fixture build failed: ${build.stderr}`);
    }
    // -u so the startup banner flushes through the pipe;
    // high WPM keeps the pacing delay short but strictly positive
    server = spawn(PYTHON, [
      "-u", "-m", "atxf", "--model-dir", fixtureDir, "serve",
      "--address", "127.0.0.1:0", "--wpm", "6000",
    ], { stdio: ["ignore", "pipe", "pipe"] });
    let banner = "";
    server.stdout!.on("data", (chunk) => {
      banner += String(chunk);
    });
    await until(() => /on http:\/\/[\d.]+:\d+/.test(banner));
    baseUrl = banner.match(/on (http:\/\/[\d.]+:\d+)/)![1];
  }, 300_000);

  afterAll(() => {
    server?.kill();
    if (fixtureDir) {
      rmSync(fixtureDir, { recursive: true, force: true });
    }
  });

  it("select domain, send, reply rendered after the pacing delay", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const revealDelays: number[] = [];
    const app = new ChatConsole(document.getElementById("app") as HTMLElement, {
      baseUrl,
      schedule: (fn, ms) => {
        revealDelays.push(ms);
        setTimeout(fn, ms);
      },
    });
    await app.loadDomains();
    const select = document.getElementById("domain-select") as HTMLSelectElement;
    expect([...select.options].map((o) => o.value)).toEqual(["toy"]);
    select.value = "toy";
    select.dispatchEvent(new Event("change"));

    const input = document.getElementById("message") as HTMLInputElement;
    input.value = "where is my parcel number 0";
    (document.getElementById("send") as HTMLButtonElement).click();

    // reply arrives hidden first (pacing), then gets revealed
    await until(() => document.querySelectorAll(".turn").length === 2);
    expect(document.querySelector(".turn.user")?.textContent)
      .toBe("where is my parcel number 0");
    expect(document.querySelector(".turn.bot.speaking")).not.toBeNull();
    expect(revealDelays).toHaveLength(1);
    expect(revealDelays[0]).toBeGreaterThan(0);

    await until(() => document.querySelector(".turn.bot.speaking") === null);
    const bot = document.querySelector(".turn.bot") as HTMLElement;
    expect(bot.textContent).toContain("tracking");
    expect(document.querySelector(".top-tokens")?.textContent?.length).toBeGreaterThan(0);
  }, 60_000);

  it("server-error path shows an inline error and keeps the transcript", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const app = new ChatConsole(document.getElementById("app") as HTMLElement, {
      baseUrl,
    });
    await app.loadDomains();
    await app.send("where is my order number 1");
    await until(() => document.querySelectorAll(".turn").length >= 2);

    // "!!!" cleans to nothing -> the service answers 400 empty_input
    await app.send("!!!");
    const turns = document.querySelectorAll(".turn");
    expect(turns).toHaveLength(4);
    expect(turns[3].className).toContain("error");
    expect(turns[3].textContent).toContain("empty_input");
    expect(turns[0].textContent).toContain("order number 1");
    expect((document.getElementById("send") as HTMLButtonElement).disabled).toBe(false);
  }, 60_000);

  it("unknown domain from a raw request yields the contract error payload", async () => {
    const response = await fetch(`${baseUrl}/chat`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ domain: "ghost", session: "s", message: "hi" }),
    });
    expect(response.status).toBe(404);
    const body = await response.json();
    expect(body.error.code).toBe("unknown_domain");
  }, 30_000);
});
