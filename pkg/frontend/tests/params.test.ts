import { describe, expect, it } from "vitest";
import { PanelApi } from "../src/api.js";
import { ParamControls } from "../src/params.js";
import { PanelStore } from "../src/store.js";
import { makeDom, makeEye, makeSnapshot, waitFor } from "./helpers.js";

interface Call {
  url: string;
  body: unknown;
}

function setup(respond: (url: string) => Response = () => jsonResponse({ ok: true })) {
  const { window, root } = makeDom();
  const calls: Call[] = [];
  const api = new PanelApi("http://rig", async (url, init) => {
    calls.push({ url, body: init?.body === undefined ? null : JSON.parse(init.body as string) });
    return respond(url);
  });
  const store = new PanelStore();
  new ParamControls(root, api, store);
  return { window, root, store, calls };
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function submit(window: ReturnType<typeof setup>["window"], root: HTMLElement): void {
  const form = root.querySelector("form")!;
  form.dispatchEvent(new window.Event("submit", { bubbles: true, cancelable: true }) as never);
}

describe("ParamControls", () => {
  it("offers broadcast plus one option per eye", () => {
    const { root, store } = setup();
    store.applyStatus(makeSnapshot([makeEye("eye1"), makeEye("eye2")]), "ws");
    const options = [...root.querySelectorAll("option")].map((o) => (o as HTMLOptionElement).value);
    expect(options).toEqual(["all", "eye1", "eye2"]);
  });

  it("keeps the chosen target when the eye list refreshes", () => {
    const { root, store } = setup();
    store.applyStatus(makeSnapshot([makeEye("eye1"), makeEye("eye2")]), "ws");
    const select = root.querySelector("select")!;
    select.value = "eye2";
    store.applyStatus(makeSnapshot([makeEye("eye1"), makeEye("eye2"), makeEye("eye3")]), "ws");
    expect(select.value).toBe("eye2");
  });

  it("posts validated params to the selected eye and confirms", async () => {
    const { window, root, store, calls } = setup();
    store.applyStatus(makeSnapshot([makeEye("eye1"), makeEye("eye2")]), "ws");
    root.querySelector("select")!.value = "eye2";
    (root.querySelector('input[name="fps"]') as HTMLInputElement).value = "2";
    submit(window, root);
    await waitFor(() => calls.length === 1);
    expect(calls[0].url).toBe("http://rig/eyes/eye2/params");
    expect(calls[0].body).toEqual({ fps: 2 });
    await waitFor(() => root.querySelector(".param-message")!.textContent!.includes("applied"));
    expect(root.querySelector(".param-message")!.textContent).toBe("applied fps=2 to eye2");
  });

  it("broadcasts when the target is all eyes", async () => {
    const { window, root, store, calls } = setup();
    store.applyStatus(makeSnapshot([makeEye("eye1")]), "ws");
    (root.querySelector('input[name="fps"]') as HTMLInputElement).value = "8";
    (root.querySelector('input[name="quality"]') as HTMLInputElement).value = "60";
    submit(window, root);
    await waitFor(() => calls.length === 1);
    expect(calls[0].url).toBe("http://rig/eyes/all/params");
    expect(calls[0].body).toEqual({ fps: 8, jpeg_quality: 60 });
  });

  it("rejects bad input locally without touching the network", async () => {
    const { window, root, calls } = setup();
    (root.querySelector('input[name="fps"]') as HTMLInputElement).value = "-3";
    submit(window, root);
    await waitFor(() => root.querySelector(".param-message")!.textContent !== "");
    expect(root.querySelector(".param-message")!.className).toContain("error");
    expect(root.querySelector(".param-message")!.textContent).toContain("positive");
    expect(calls).toHaveLength(0);
  });

  it("surfaces the server's detail message on a rejected post", async () => {
    const { window, root, store } = setup(() => jsonResponse({ detail: "unknown eye: eye9" }, 404));
    store.applyStatus(makeSnapshot([makeEye("eye1")]), "ws");
    (root.querySelector('input[name="fps"]') as HTMLInputElement).value = "4";
    submit(window, root);
    await waitFor(() => root.querySelector(".param-message")!.textContent!.includes("unknown eye"));
    expect(root.querySelector(".param-message")!.className).toContain("error");
    const button = root.querySelector("button")! as HTMLButtonElement;
    expect(button.disabled).toBe(false);
  });
});
